//! Seeded instance builders for the theory checks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::increment::{GoalTag, OutcomeKernel};
use super::props::check_prop3;
use crate::dist::DiscreteDist;
use crate::error::{Error, Result};

const MAX_ATTEMPTS: usize = 1000;

/// A tagged instance satisfying the three-set premises by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop3Instance {
    pub visited: DiscreteDist,
    pub uncertainty: Vec<f64>,
    pub kernel: OutcomeKernel,
    pub delta_uninfo: f64,
    pub delta_info: f64,
}

/// Builds a tagged instance over `n_states >= 4` states.
///
/// States are ordered by strictly decreasing visited density; state 0 plays
/// the frequently visited start. Uninformative goals drift back toward it,
/// informative goals spread over strictly rarer states, with mixing weights
/// solved so the expected log densities sit exactly `delta` away.
pub fn prop3_instance(n_states: usize, seed: u64) -> Result<Prop3Instance> {
    if n_states < 4 {
        return Err(Error::InvalidArgument(format!(
            "a tagged instance needs at least 4 states, got {n_states}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        if let Some(inst) = try_build(n_states, &mut rng)? {
            return Ok(inst);
        }
    }
    Err(Error::InvalidArgument(format!(
        "no premise-satisfying instance found for n = {n_states}, seed = {seed}"
    )))
}

fn try_build(n: usize, rng: &mut ChaCha8Rng) -> Result<Option<Prop3Instance>> {
    let mut weights: Vec<f64> = (0..n).map(|_| (rng.random_range(-4.0..0.0f64)).exp()).collect();
    weights.sort_by(|a, b| b.total_cmp(a));
    if weights.windows(2).any(|w| w[0] <= w[1] * (1.0 + 1e-6)) {
        return Ok(None);
    }
    let visited = DiscreteDist::from_weights(&weights)?;
    let logp: Vec<f64> = visited.probs().iter().map(|p| p.ln()).collect();

    let mut middle: Vec<usize> = (1..n - 1).collect();
    middle.shuffle(rng);
    let max_tagged = ((n - 2) / 3).max(1);
    let n_uninfo = rng.random_range(1..=max_tagged);
    let n_info = rng.random_range(1..=max_tagged.min(middle.len() - n_uninfo));
    let uninfo = &middle[..n_uninfo];
    let info = &middle[n_uninfo..n_uninfo + n_info];

    let delta_uninfo = 0.5
        * uninfo
            .iter()
            .map(|&g| logp[0] - logp[g])
            .fold(f64::INFINITY, f64::min);
    let rarer_mean = |g: usize| -> f64 { logp[g + 1..].iter().sum::<f64>() / (n - g - 1) as f64 };
    let delta_info = 0.5
        * info
            .iter()
            .map(|&g| logp[g] - rarer_mean(g))
            .fold(f64::INFINITY, f64::min);

    let mut kernel = OutcomeKernel::exploit(n)?;
    for &g in uninfo {
        let w = delta_uninfo / (logp[0] - logp[g]);
        let mut row = vec![0.0; n];
        row[0] = w;
        row[g] = 1.0 - w;
        kernel.set_row(g, DiscreteDist::new(row)?, GoalTag::Uninfo)?;
    }
    for &g in info {
        let w = delta_info / (logp[g] - rarer_mean(g));
        let spread = w / (n - g - 1) as f64;
        let mut row = vec![0.0; n];
        row[g] = 1.0 - w;
        for slot in row.iter_mut().skip(g + 1) {
            *slot = spread;
        }
        kernel.set_row(g, DiscreteDist::new(row)?, GoalTag::Info)?;
    }

    // uncertainty falls with density on exploit goals, is suppressed on
    // uninformative goals and boosted on informative ones
    let mut uncertainty: Vec<f64> = logp
        .iter()
        .map(|l| -l + rng.random_range(0.0..0.1))
        .collect();
    let (lo, hi) = uncertainty
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), u| (a.min(*u), b.max(*u)));
    for &g in uninfo {
        uncertainty[g] = lo * rng.random_range(0.05..0.3);
    }
    for &g in info {
        uncertainty[g] = hi * rng.random_range(1.0..1.5);
    }

    let inst = Prop3Instance {
        visited,
        uncertainty,
        kernel,
        delta_uninfo,
        delta_info,
    };
    let report = check_prop3(
        &inst.visited,
        &inst.uncertainty,
        &inst.kernel,
        inst.delta_uninfo,
        inst.delta_info,
    )?;
    let f = report.flags;
    if f.covariance_strict && f.uninfo_strict && f.info_strict {
        Ok(Some(inst))
    } else {
        Ok(None)
    }
}

/// Random visited distribution over `n` states; roughly a quarter of the
/// states are left unvisited when `allow_gaps` is set (at least two stay).
pub fn random_visited<R: Rng + ?Sized>(n: usize, allow_gaps: bool, rng: &mut R) -> Result<DiscreteDist> {
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two states".into()));
    }
    let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..0.0f64).exp()).collect();
    if allow_gaps {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        for &i in order.iter().skip(2) {
            if rng.random_bool(0.25) {
                w[i] = 0.0;
            }
        }
    }
    DiscreteDist::from_weights(&w)
}

/// Non-negative uncertainty with at least one positive entry on the support.
pub fn random_uncertainty<R: Rng + ?Sized>(p: &DiscreteDist, rng: &mut R) -> Vec<f64> {
    let mut u: Vec<f64> = (0..p.len())
        .map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0..3.0) })
        .collect();
    if let Some(g) = (0..p.len()).find(|g| p.prob(*g) > 0.0) {
        u[g] += 0.5;
    }
    u
}

/// Random kernel whose rows stay inside the support of `p`, for derivative
/// audits. Tags are nominal: rows that are not point masses at their goal
/// are tagged `Info` without enforcing any offset.
pub fn random_kernel<R: Rng + ?Sized>(p: &DiscreteDist, rng: &mut R) -> Result<OutcomeKernel> {
    let n = p.len();
    let support: Vec<usize> = (0..n).filter(|s| p.prob(*s) > 0.0).collect();
    let mut rows = Vec::with_capacity(n);
    let mut tags = Vec::with_capacity(n);
    for g in 0..n {
        let mut w = vec![0.0; n];
        for &s in &support {
            if rng.random_bool(0.5) {
                w[s] = rng.random::<f64>();
            }
        }
        let anchor = if p.prob(g) > 0.0 { g } else { support[0] };
        w[anchor] += rng.random::<f64>() + 0.1;
        let row = DiscreteDist::from_weights(&w)?;
        let tag = if row.prob(g) == 1.0 {
            GoalTag::Exploit
        } else {
            GoalTag::Info
        };
        rows.push(row);
        tags.push(tag);
    }
    OutcomeKernel::new(rows, tags)
}
