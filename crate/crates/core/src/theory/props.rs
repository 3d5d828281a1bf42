//! Checks of the entropy-increment claims for exact and tagged outcome
//! kernels.

use serde::{Deserialize, Serialize};

use super::increment::{
    derivative_limit, entropy_increment, step_grid, uniform_covariance, uniform_curriculum,
    vu_curriculum, GoalTag, OutcomeKernel,
};
use crate::dist::DiscreteDist;
use crate::error::{Error, Result};

/// Tolerance of the premise equalities on `E_rho[ln p]`.
pub const DELTA_TOLERANCE: f64 = 1e-9;
/// Tolerance of the three-term closed form against the derivative.
pub const IDENTITY_TOLERANCE: f64 = 1e-10;
/// Values within this (relative to the problem scale) count as zero.
pub const ZERO_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Premises hold with at least one strict inequality and the
    /// derivative is positive.
    Pass,
    /// Premises hold only with equality and the derivative is zero.
    PassBoundary,
    /// Premises do not hold; the claim makes no prediction.
    PremiseUnmet,
    /// Premises hold but the conclusion (or an identity) is violated.
    Fail,
}

impl Verdict {
    pub fn is_pass(self) -> bool {
        matches!(self, Verdict::Pass | Verdict::PassBoundary)
    }

    /// False only for an outright failure.
    pub fn is_consistent(self) -> bool {
        self != Verdict::Fail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PremiseFlags {
    pub covariance_nonpositive: bool,
    pub covariance_strict: bool,
    pub uninfo_downweighted: bool,
    pub uninfo_strict: bool,
    pub info_upweighted: bool,
    pub info_strict: bool,
}

impl PremiseFlags {
    pub fn all_hold(&self) -> bool {
        self.covariance_nonpositive && self.uninfo_downweighted && self.info_upweighted
    }

    pub fn any_strict(&self) -> bool {
        self.covariance_strict || self.uninfo_strict || self.info_strict
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementReport {
    /// `(eps, I(eps))` pairs over the finite-difference grid.
    pub increments: Vec<(f64, f64)>,
    pub derivative_limit: f64,
    /// Uniform-measure covariance of `U` and `ln p` on the support.
    pub covariance: f64,
    /// `covariance / mean(U)`; the derivative equals its negation for
    /// exploit kernels.
    pub scaled_covariance: f64,
    /// Closed form `-scaled_cov - d1 * sum_uninfo + d2 * sum_info`.
    pub three_term: f64,
    pub identity_holds: bool,
    pub flags: PremiseFlags,
    pub verdict: Verdict,
}

struct Weighted {
    p_u: DiscreteDist,
    p_vu: DiscreteDist,
    covariance: f64,
    mean_u: f64,
}

fn weigh(p: &DiscreteDist, uncertainty: &[f64]) -> Result<Weighted> {
    let p_u = uniform_curriculum(p)?;
    let p_vu = vu_curriculum(p, uncertainty)?;
    let (covariance, mean_u) = uniform_covariance(p, uncertainty)?;
    Ok(Weighted {
        p_u,
        p_vu,
        covariance,
        mean_u,
    })
}

/// Scale for zero tests on the covariance: `mean|U| * mean|ln p|`.
fn covariance_scale(p: &DiscreteDist, uncertainty: &[f64]) -> f64 {
    let support: Vec<(f64, f64)> = p
        .probs()
        .iter()
        .zip(uncertainty)
        .filter(|(ps, _)| **ps > 0.0)
        .map(|(ps, u)| (u.abs(), ps.ln().abs()))
        .collect();
    let k = support.len().max(1) as f64;
    let mu = support.iter().map(|(u, _)| u).sum::<f64>() / k;
    let ml = support.iter().map(|(_, l)| l).sum::<f64>() / k;
    (mu * ml).max(f64::MIN_POSITIVE)
}

fn increments(p: &DiscreteDist, u: &[f64], kernel: &OutcomeKernel) -> Result<Vec<(f64, f64)>> {
    step_grid(p)
        .iter()
        .map(|&eps| entropy_increment(p, u, kernel, eps).map(|i| (eps, i)))
        .collect()
}

fn decide(flags: &PremiseFlags, identity_holds: bool, derivative: f64, scale: f64) -> Verdict {
    if !identity_holds {
        return Verdict::Fail;
    }
    if !flags.all_hold() {
        return Verdict::PremiseUnmet;
    }
    let zero = ZERO_TOLERANCE * scale.max(1.0);
    if flags.any_strict() {
        if derivative > 0.0 {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    } else if derivative.abs() <= zero {
        Verdict::PassBoundary
    } else if derivative > 0.0 {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Exploit-kernel check: non-positive covariance implies a non-negative
/// derivative, strictly positive when the covariance is strictly negative.
pub fn check_prop2(p: &DiscreteDist, uncertainty: &[f64]) -> Result<IncrementReport> {
    let kernel = OutcomeKernel::exploit(p.len())?;
    let w = weigh(p, uncertainty)?;
    let derivative = derivative_limit(p, &w.p_u, &w.p_vu, &kernel)?;
    let scaled = w.covariance / w.mean_u;
    let scale = covariance_scale(p, uncertainty);
    let zero = ZERO_TOLERANCE * scale;
    let flags = PremiseFlags {
        covariance_nonpositive: w.covariance <= zero,
        covariance_strict: w.covariance < -zero,
        uninfo_downweighted: true,
        uninfo_strict: false,
        info_upweighted: true,
        info_strict: false,
    };
    let three_term = -scaled;
    let identity_holds = (derivative - three_term).abs() <= IDENTITY_TOLERANCE * derivative.abs().max(1.0);
    let verdict = decide(&flags, identity_holds, derivative, scale / w.mean_u.max(f64::MIN_POSITIVE));
    Ok(IncrementReport {
        increments: increments(p, uncertainty, &kernel)?,
        derivative_limit: derivative,
        covariance: w.covariance,
        scaled_covariance: scaled,
        three_term,
        identity_holds,
        flags,
        verdict,
    })
}

/// Tagged-kernel check. Premise-structure mismatches (a tagged row whose
/// expected log density does not sit exactly `delta` above or below the
/// goal's) are reported as [`Error::Structural`], separately from verdicts.
pub fn check_prop3(
    p: &DiscreteDist,
    uncertainty: &[f64],
    kernel: &OutcomeKernel,
    delta_uninfo: f64,
    delta_info: f64,
) -> Result<IncrementReport> {
    let n = p.len();
    if kernel.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: kernel.len(),
        });
    }
    let has = |tag| (0..n).any(|g| p.prob(g) > 0.0 && kernel.tag(g) == tag);
    for (name, delta, tag) in [
        ("uninformative", delta_uninfo, GoalTag::Uninfo),
        ("informative", delta_info, GoalTag::Info),
    ] {
        if has(tag) && !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Structural(format!(
                "{name} offset must be a positive constant, got {delta}"
            )));
        }
    }
    for g in (0..n).filter(|g| p.prob(*g) > 0.0) {
        let row = kernel.row(g);
        let expected_log = |row: &DiscreteDist| -> f64 {
            row.probs()
                .iter()
                .zip(p.probs())
                .filter(|(r, _)| **r > 0.0)
                .map(|(r, ps)| r * ps.ln())
                .sum()
        };
        let target = match kernel.tag(g) {
            GoalTag::Exploit => continue,
            GoalTag::Uninfo => p.prob(g).ln() + delta_uninfo,
            GoalTag::Info => p.prob(g).ln() - delta_info,
        };
        let got = expected_log(row);
        if !((got - target).abs() <= DELTA_TOLERANCE) {
            return Err(Error::Structural(format!(
                "goal {g} ({:?}): E[ln p] = {got}, expected {target}",
                kernel.tag(g)
            )));
        }
    }

    let w = weigh(p, uncertainty)?;
    let derivative = derivative_limit(p, &w.p_u, &w.p_vu, kernel)?;
    let scaled = w.covariance / w.mean_u;
    let scale = covariance_scale(p, uncertainty);
    let zero = ZERO_TOLERANCE * scale;
    let mass_gap = |tag| -> f64 {
        (0..n)
            .filter(|g| kernel.tag(*g) == tag)
            .map(|g| w.p_vu.prob(g) - w.p_u.prob(g))
            .sum()
    };
    let uninfo_gap = mass_gap(GoalTag::Uninfo);
    let info_gap = mass_gap(GoalTag::Info);
    let flags = PremiseFlags {
        covariance_nonpositive: w.covariance <= zero,
        covariance_strict: w.covariance < -zero,
        uninfo_downweighted: uninfo_gap <= ZERO_TOLERANCE,
        uninfo_strict: uninfo_gap < -ZERO_TOLERANCE,
        info_upweighted: info_gap >= -ZERO_TOLERANCE,
        info_strict: info_gap > ZERO_TOLERANCE,
    };
    let three_term = -scaled - delta_uninfo * uninfo_gap + delta_info * info_gap;
    let identity_holds =
        (derivative - three_term).abs() <= IDENTITY_TOLERANCE * derivative.abs().max(1.0);
    let verdict = decide(&flags, identity_holds, derivative, scale / w.mean_u.max(f64::MIN_POSITIVE));
    Ok(IncrementReport {
        increments: increments(p, uncertainty, kernel)?,
        derivative_limit: derivative,
        covariance: w.covariance,
        scaled_covariance: scaled,
        three_term,
        identity_holds,
        flags,
        verdict,
    })
}
