//! Curriculum goal samplers: target region, visited states, density-skewed
//! and value-uncertainty weighted.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::SacAgent;
use crate::density::{skew_weights_from_log_densities, validate_alpha, DensityModel};
use crate::dist::DiscreteDist;
use crate::envs::{MazeSpec, Point};
use crate::error::{Error, Result};
use crate::metrics::{pearson, sample_target_goal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerVariant {
    TargetGoal,
    Visited,
    SkewFit,
    Vuvc,
}

impl SamplerVariant {
    pub fn name(self) -> &'static str {
        match self {
            Self::TargetGoal => "target_goal",
            Self::Visited => "visited",
            Self::SkewFit => "skew_fit",
            Self::Vuvc => "vuvc",
        }
    }

    pub fn needs_density(self) -> bool {
        matches!(self, Self::SkewFit | Self::Vuvc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub variant: SamplerVariant,
    /// Skew exponent in `[-1, 0)`.
    pub alpha: f64,
    /// Candidate pool size drawn from the buffer each epoch.
    pub candidates: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            variant: SamplerVariant::Vuvc,
            alpha: -1.0,
            candidates: 10_000,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.variant.needs_density() {
            validate_alpha(self.alpha).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.candidates == 0 {
            return Err(Error::Config("sampler candidates must be positive".into()));
        }
        Ok(())
    }
}

/// Drawn goals together with the distribution they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct GoalBatch {
    pub goals: Vec<Point>,
    pub weights: DiscreteDist,
}

/// Weights `U_i * p_i^alpha` over candidates, from log densities. Falls back
/// to pure skew weights when every `U_i` is zero.
pub fn vuvc_weights_from_log_densities(uncertainty: &[f64], log_densities: &[f64], alpha: f64) -> Result<DiscreteDist> {
    if uncertainty.len() != log_densities.len() {
        return Err(Error::LengthMismatch {
            expected: log_densities.len(),
            got: uncertainty.len(),
        });
    }
    validate_alpha(alpha)?;
    if let Some(u) = uncertainty.iter().find(|u| !(u.is_finite() && **u >= 0.0)) {
        return Err(Error::InvalidArgument(format!("uncertainty must be finite and non-negative, got {u}")));
    }
    let u_max = uncertainty.iter().copied().fold(0.0, f64::max);
    if u_max == 0.0 {
        return skew_weights_from_log_densities(log_densities, alpha);
    }
    let logits: Vec<f64> = uncertainty
        .iter()
        .zip(log_densities)
        .map(|(u, l)| (u / u_max).ln() + alpha * l)
        .collect();
    DiscreteDist::from_log_weights(&logits)
}

/// Weights `U_i * density_i^alpha` for strictly positive densities.
pub fn vuvc_weights(uncertainty: &[f64], densities: &[f64], alpha: f64) -> Result<DiscreteDist> {
    if let Some(d) = densities.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(Error::InvalidArgument(format!("densities must be positive, got {d}")));
    }
    let logs: Vec<f64> = densities.iter().map(|d| d.ln()).collect();
    vuvc_weights_from_log_densities(uncertainty, &logs, alpha)
}

/// Up to `n` buffer states drawn uniformly without replacement; all states
/// when there are fewer.
pub fn candidate_pool<R: Rng + ?Sized>(states: &[Point], n: usize, rng: &mut R) -> Vec<Point> {
    if states.len() <= n {
        return states.to_vec();
    }
    let mut idx = sample_indices(rng, states.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| states[i]).collect()
}

#[derive(Debug, Clone)]
enum Support {
    Region(MazeSpec),
    Points(Vec<Point>),
}

/// A goal distribution for one epoch.
#[derive(Debug, Clone)]
pub struct CurriculumSampler {
    variant: SamplerVariant,
    support: Support,
    weights: DiscreteDist,
    index: Option<WeightedIndex<f64>>,
    log_densities: Option<Vec<f64>>,
    uncertainty: Option<Vec<f64>>,
}

impl CurriculumSampler {
    /// Uniform over the maze's goal region.
    pub fn target(maze: &MazeSpec) -> Result<Self> {
        Ok(Self {
            variant: SamplerVariant::TargetGoal,
            weights: DiscreteDist::uniform(maze.goal_region().len())?,
            support: Support::Region(maze.clone()),
            index: None,
            log_densities: None,
            uncertainty: None,
        })
    }

    /// Uniform over visited states.
    pub fn visited(states: Vec<Point>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Empty("visited states"));
        }
        Ok(Self {
            variant: SamplerVariant::Visited,
            weights: DiscreteDist::uniform(states.len())?,
            support: Support::Points(states),
            index: None,
            log_densities: None,
            uncertainty: None,
        })
    }

    /// Candidates weighted by `p(g)^alpha`.
    pub fn skew_fit(candidates: Vec<Point>, density: &DensityModel, alpha: f64) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::Empty("skew candidates"));
        }
        let logs: Vec<f64> = candidates.iter().map(|c| density.log_prob(*c)).collect();
        let weights = skew_weights_from_log_densities(&logs, alpha)?;
        Self::weighted(SamplerVariant::SkewFit, candidates, weights, logs, None)
    }

    /// Candidates weighted by `U(g) p(g)^alpha` with given uncertainties.
    pub fn vuvc(candidates: Vec<Point>, density: &DensityModel, uncertainty: Vec<f64>, alpha: f64) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::Empty("vuvc candidates"));
        }
        let logs: Vec<f64> = candidates.iter().map(|c| density.log_prob(*c)).collect();
        let weights = vuvc_weights_from_log_densities(&uncertainty, &logs, alpha)?;
        Self::weighted(SamplerVariant::Vuvc, candidates, weights, logs, Some(uncertainty))
    }

    /// Candidates weighted by `U(g) p(g)^alpha`, with `U` queried from the
    /// agent's critic ensemble at the initial state.
    pub fn vuvc_from_agent(
        candidates: Vec<Point>,
        density: &DensityModel,
        agent: &SacAgent,
        s0: Point,
        alpha: f64,
    ) -> Result<Self> {
        let u = agent.value_uncertainty(s0, &candidates)?;
        Self::vuvc(candidates, density, u, alpha)
    }

    fn weighted(
        variant: SamplerVariant,
        candidates: Vec<Point>,
        weights: DiscreteDist,
        logs: Vec<f64>,
        uncertainty: Option<Vec<f64>>,
    ) -> Result<Self> {
        Ok(Self {
            variant,
            index: Some(weights.sampler()),
            weights,
            support: Support::Points(candidates),
            log_densities: Some(logs),
            uncertainty,
        })
    }

    pub fn variant(&self) -> SamplerVariant {
        self.variant
    }

    pub fn weights(&self) -> &DiscreteDist {
        &self.weights
    }

    /// Candidate points, or `None` for the goal-region sampler.
    pub fn candidates(&self) -> Option<&[Point]> {
        match &self.support {
            Support::Points(p) => Some(p),
            Support::Region(_) => None,
        }
    }

    pub fn uncertainty(&self) -> Option<&[f64]> {
        self.uncertainty.as_deref()
    }

    pub fn log_densities(&self) -> Option<&[f64]> {
        self.log_densities.as_deref()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match (&self.support, &self.index) {
            (Support::Region(maze), _) => sample_target_goal(maze, rng),
            (Support::Points(p), Some(index)) => p[index.sample(rng)],
            (Support::Points(p), None) => p[rng.random_range(0..p.len())],
        }
    }

    pub fn sample_goals<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> GoalBatch {
        GoalBatch {
            goals: (0..n).map(|_| self.sample(rng)).collect(),
            weights: self.weights.clone(),
        }
    }

    /// Writes `epoch,goal_x,goal_y,U,log_density,weight` per candidate.
    /// Columns that do not apply to the variant are left empty.
    pub fn write_csv<W: Write>(&self, epoch: usize, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epoch", "goal_x", "goal_y", "U", "log_density", "weight"])?;
        if let Support::Points(points) = &self.support {
            for (i, p) in points.iter().enumerate() {
                let u = self.uncertainty.as_ref().map(|u| u[i].to_string()).unwrap_or_default();
                let l = self
                    .log_densities
                    .as_ref()
                    .map(|l| l[i].to_string())
                    .unwrap_or_default();
                w.write_record([
                    epoch.to_string(),
                    p[0].to_string(),
                    p[1].to_string(),
                    u,
                    l,
                    self.weights.prob(i).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-candidate `(goal, U(g), log density)` diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub goal: Point,
    pub uncertainty: f64,
    pub log_density: f64,
}

pub fn uncertainty_profile(
    agent: &SacAgent,
    density: &DensityModel,
    s0: Point,
    candidates: &[Point],
) -> Result<Vec<ProfileRow>> {
    let u = agent.value_uncertainty(s0, candidates)?;
    Ok(candidates
        .iter()
        .zip(u)
        .map(|(g, uncertainty)| ProfileRow {
            goal: *g,
            uncertainty,
            log_density: density.log_prob(*g),
        })
        .collect())
}

/// Pearson correlation between `U` and log density over a profile.
pub fn profile_correlation(profile: &[ProfileRow]) -> Result<f64> {
    let u: Vec<f64> = profile.iter().map(|r| r.uncertainty).collect();
    let l: Vec<f64> = profile.iter().map(|r| r.log_density).collect();
    pearson(&u, &l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::AgentConfig;
    use crate::density::{skew_weights, DensityConfig, StateBox};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn vuvc_examples() {
        let w = vuvc_weights(&[1.0, 1.0], &[0.5, 0.5], -0.3).unwrap();
        assert!(close(w.probs(), &[0.5, 0.5], 1e-15));
        let w = vuvc_weights(&[1.0, 3.0], &[0.5, 0.25], -1.0).unwrap();
        assert!(close(w.probs(), &[1.0 / 7.0, 6.0 / 7.0], 1e-15));
        let w = vuvc_weights(&[0.0, 0.0, 5.0], &[0.2, 0.3, 0.5], -0.5).unwrap();
        assert_eq!(w.probs(), &[0.0, 0.0, 1.0]);
        assert!(vuvc_weights(&[1.0], &[0.5, 0.5], -1.0).is_err());
        assert!(vuvc_weights(&[1.0, -1.0], &[0.5, 0.5], -1.0).is_err());
        assert!(vuvc_weights(&[1.0, 1.0], &[0.5, 0.5], 0.0).is_err());
    }

    #[test]
    fn all_zero_uncertainty_falls_back_to_skew() {
        let logs = [0.1f64.ln(), 0.7f64.ln(), 0.2f64.ln()];
        let a = vuvc_weights_from_log_densities(&[0.0; 3], &logs, -1.0).unwrap();
        let b = skew_weights_from_log_densities(&logs, -1.0).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn constant_uncertainty_equals_skew_exactly(
            logs in prop::collection::vec(-8.0f64..3.0, 1..40),
            c in 1e-3f64..1e3,
            alpha in -1.0f64..-0.01,
        ) {
            let u = vec![c; logs.len()];
            let a = vuvc_weights_from_log_densities(&u, &logs, alpha).unwrap();
            let b = skew_weights_from_log_densities(&logs, alpha).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn scale_invariant_in_uncertainty(
            pairs in prop::collection::vec((0.0f64..5.0, -6.0f64..2.0), 2..30),
            c in 1e-3f64..1e3,
        ) {
            let (u, logs): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assume!(u.iter().any(|v| *v > 0.0));
            let scaled: Vec<f64> = u.iter().map(|v| v * c).collect();
            let a = vuvc_weights_from_log_densities(&u, &logs, -1.0).unwrap();
            let b = vuvc_weights_from_log_densities(&scaled, &logs, -1.0).unwrap();
            prop_assert!(close(a.probs(), b.probs(), 1e-12));
        }

        #[test]
        fn raising_one_uncertainty_raises_its_weight(
            pairs in prop::collection::vec((0.01f64..5.0, -6.0f64..2.0), 2..30),
            pick in 0usize..30,
            bump in 0.01f64..3.0,
        ) {
            let (u, logs): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let i = pick % u.len();
            let mut raised = u.clone();
            raised[i] += bump;
            let a = vuvc_weights_from_log_densities(&u, &logs, -0.7).unwrap();
            let b = vuvc_weights_from_log_densities(&raised, &logs, -0.7).unwrap();
            prop_assert!(b.prob(i) > a.prob(i));
            prop_assert!(b.probs().iter().all(|w| w.is_finite() && *w > 0.0));
        }
    }

    #[test]
    fn visited_singleton_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = CurriculumSampler::visited(vec![[1.25, 3.5]; 4]).unwrap();
        let batch = s.sample_goals(100, &mut rng);
        assert!(batch.goals.iter().all(|g| *g == [1.25, 3.5]));
        assert!(CurriculumSampler::visited(vec![]).is_err());
    }

    fn three_bin_density() -> (DensityModel, Vec<Point>) {
        // bins of equal width on [0, 3] x [0, 1]; masses 0.5, 0.25, 0.25
        let cfg = DensityConfig {
            bins: 3,
            ..DensityConfig::default()
        };
        let mut samples = vec![[0.5, 0.5]; 2];
        samples.push([1.5, 0.5]);
        samples.push([2.5, 0.5]);
        let model = DensityModel::fit(&samples, &cfg, StateBox::new([0.0, 0.0], [3.0, 1.0]).unwrap()).unwrap();
        (model, vec![[0.5, 0.5], [1.5, 0.5], [2.5, 0.5]])
    }

    fn frequencies(s: &CurriculumSampler, cands: &[Point], n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = vec![0usize; cands.len()];
        for g in s.sample_goals(n, &mut rng).goals {
            counts[cands.iter().position(|c| *c == g).unwrap()] += 1;
        }
        counts.iter().map(|c| *c as f64 / n as f64).collect()
    }

    #[test]
    fn skew_fit_draw_frequencies() {
        let (model, cands) = three_bin_density();
        let s = CurriculumSampler::skew_fit(cands.clone(), &model, -1.0).unwrap();
        assert!(close(s.weights().probs(), &[0.2, 0.4, 0.4], 1e-12));
        let f = frequencies(&s, &cands, 10_000, 1);
        assert!(close(&f, &[0.2, 0.4, 0.4], 0.02), "{f:?}");
    }

    #[test]
    fn vuvc_constant_uncertainty_matches_skew_fit_draws() {
        let (model, cands) = three_bin_density();
        let skew = CurriculumSampler::skew_fit(cands.clone(), &model, -1.0).unwrap();
        let vuvc = CurriculumSampler::vuvc(cands.clone(), &model, vec![0.7; 3], -1.0).unwrap();
        assert_eq!(skew.weights(), vuvc.weights());
        let n = 10_000;
        let fa = frequencies(&skew, &cands, n, 2);
        let fb = frequencies(&vuvc, &cands, n, 3);
        for (i, p) in skew.weights().probs().iter().enumerate() {
            let sd = (2.0 * p * (1.0 - p) / n as f64).sqrt();
            assert!((fa[i] - fb[i]).abs() < 3.0 * sd, "{fa:?} {fb:?}");
        }
        let direct = skew_weights(&model, &cands, -1.0).unwrap();
        assert_eq!(&direct, skew.weights());
    }

    #[test]
    fn target_sampler_stays_in_region() {
        let m = MazeSpec::builtin("point_maze_b").unwrap();
        let s = CurriculumSampler::target(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(s.sample_goals(500, &mut rng).goals.iter().all(|g| m.is_free(*g)));
        assert!(s.candidates().is_none());
    }

    #[test]
    fn profile_contracts() {
        let (model, cands) = three_bin_density();
        let mut agent = SacAgent::new(
            AgentConfig {
                hidden: vec![8, 8],
                ..AgentConfig::default()
            },
            5,
        )
        .unwrap();
        let p = uncertainty_profile(&agent, &model, [0.5, 0.5], &cands).unwrap();
        assert_eq!(p.len(), cands.len());
        let u: Vec<f64> = p.iter().map(|r| r.uncertainty).collect();
        let l: Vec<f64> = p.iter().map(|r| r.log_density).collect();
        assert_eq!(
            profile_correlation(&p).unwrap().to_bits(),
            pearson(&u, &l).unwrap().to_bits()
        );
        let s = CurriculumSampler::vuvc_from_agent(cands.clone(), &model, &agent, [0.5, 0.5], -1.0).unwrap();
        assert_eq!(s.uncertainty().unwrap(), &u[..]);
        agent.synchronize_critics();
        let p = uncertainty_profile(&agent, &model, [0.5, 0.5], &cands).unwrap();
        assert!(p.iter().all(|r| r.uncertainty == 0.0));
    }

    #[test]
    fn candidate_pool_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let states: Vec<Point> = (0..100).map(|i| [i as f64, 0.0]).collect();
        assert_eq!(candidate_pool(&states, 500, &mut rng).len(), 100);
        let pool = candidate_pool(&states, 10, &mut rng);
        assert_eq!(pool.len(), 10);
        assert!(pool.windows(2).all(|w| w[0][0] < w[1][0]));
    }

    #[test]
    fn csv_dump_has_one_row_per_candidate() {
        let (model, cands) = three_bin_density();
        let s = CurriculumSampler::vuvc(cands, &model, vec![1.0, 2.0, 3.0], -1.0).unwrap();
        let mut out = Vec::new();
        s.write_csv(4, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("epoch,goal_x,goal_y,U,log_density,weight"));
    }
}
