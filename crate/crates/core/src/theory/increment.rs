//! Next-step visited distributions, curricula over a discrete support, and
//! the expected entropy increment with its small-step derivative.

use serde::{Deserialize, Serialize};

use crate::dist::DiscreteDist;
use crate::error::{Error, Result};

/// Finite-difference steps used for the small-step derivative when every
/// visited state has probability at least 1%. See [`step_grid`].
pub const EPS_GRID: [f64; 3] = [1e-4, 1e-5, 1e-6];

/// [`EPS_GRID`] shrunk so the largest step stays below 1% of the smallest
/// positive probability of `p`. The expansion of `ln(p + eps rho)` in
/// `eps` only converges for `eps < p / rho`.
pub fn step_grid(p: &DiscreteDist) -> [f64; 3] {
    let p_min = p.probs().iter().copied().filter(|x| *x > 0.0).fold(1.0, f64::min);
    let scale = (1e-2 * p_min / EPS_GRID[0]).min(1.0);
    EPS_GRID.map(|e| e * scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalTag {
    /// Rollouts end exactly at the goal.
    Exploit,
    /// Rollouts drift toward higher-density states.
    Uninfo,
    /// Rollouts spread toward lower-density states.
    Info,
}

/// Outcome distribution `rho(s | g)` for every goal `g`, plus a tag per goal.
///
/// Goals and states share one index set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeKernel {
    rows: Vec<DiscreteDist>,
    tags: Vec<GoalTag>,
}

impl OutcomeKernel {
    pub fn new(rows: Vec<DiscreteDist>, tags: Vec<GoalTag>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Empty("outcome kernel"));
        }
        if tags.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: tags.len(),
            });
        }
        for (g, (row, tag)) in rows.iter().zip(&tags).enumerate() {
            if row.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            if *tag == GoalTag::Exploit && row.prob(g) != 1.0 {
                return Err(Error::Structural(format!(
                    "exploit row {g} is not a point mass at its goal"
                )));
            }
        }
        Ok(Self { rows, tags })
    }

    /// `rho(s | g) = I(s = g)` for every goal.
    pub fn exploit(n: usize) -> Result<Self> {
        let rows = (0..n)
            .map(|g| DiscreteDist::point_mass(n, g))
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows, vec![GoalTag::Exploit; n])
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, goal: usize) -> &DiscreteDist {
        &self.rows[goal]
    }

    pub fn tag(&self, goal: usize) -> GoalTag {
        self.tags[goal]
    }

    pub fn tags(&self) -> &[GoalTag] {
        &self.tags
    }

    pub fn set_row(&mut self, goal: usize, row: DiscreteDist, tag: GoalTag) -> Result<()> {
        if row.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: row.len(),
            });
        }
        self.rows[goal] = row;
        self.tags[goal] = tag;
        Ok(())
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("step size must be positive, got {eps}")))
    }
}

/// `(p(s) + eps * rho(s)) / (1 + eps)`.
pub fn next_visited(p: &DiscreteDist, rho: &DiscreteDist, eps: f64) -> Result<DiscreteDist> {
    check_eps(eps)?;
    check_len(p.len(), rho.len())?;
    let probs = p
        .probs()
        .iter()
        .zip(rho.probs())
        .map(|(a, b)| (a + eps * b) / (1.0 + eps))
        .collect();
    DiscreteDist::new(probs)
}

/// Uniform distribution over the support of `p`.
pub fn uniform_curriculum(p: &DiscreteDist) -> Result<DiscreteDist> {
    let support = p.support();
    let k = support.iter().filter(|s| **s).count();
    if k == 0 {
        return Err(Error::Empty("support"));
    }
    let probs = support
        .into_iter()
        .map(|s| if s { 1.0 / k as f64 } else { 0.0 })
        .collect();
    DiscreteDist::new(probs)
}

/// Distribution proportional to `U(g)` on the support of `p`.
pub fn vu_curriculum(p: &DiscreteDist, uncertainty: &[f64]) -> Result<DiscreteDist> {
    check_len(p.len(), uncertainty.len())?;
    if let Some(u) = uncertainty.iter().find(|u| !u.is_finite() || **u < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "uncertainty must be finite and non-negative, got {u}"
        )));
    }
    let weights: Vec<f64> = p
        .support()
        .into_iter()
        .zip(uncertainty)
        .map(|(s, u)| if s { *u } else { 0.0 })
        .collect();
    if weights.iter().all(|w| *w == 0.0) {
        return Err(Error::InvalidArgument(
            "uncertainty is zero on the whole support".into(),
        ));
    }
    DiscreteDist::from_weights(&weights)
}

/// `H(next_visited(p, rho, eps)) - H(p)`, evaluated per state as
/// `-d ln q - p ln(1 + d / p)` with `d = q - p` to avoid cancellation.
fn entropy_change(p: &DiscreteDist, rho: &DiscreteDist, eps: f64) -> Result<f64> {
    let next = next_visited(p, rho, eps)?;
    let mut acc = 0.0;
    for ((ps, rs), q) in p.probs().iter().zip(rho.probs()).zip(next.probs()) {
        if *q == 0.0 {
            continue;
        }
        if *ps > 0.0 {
            let d = eps * (rs - ps) / (1.0 + eps);
            acc += -d * q.ln() - ps * (d / ps).ln_1p();
        } else {
            acc += -q * q.ln();
        }
    }
    Ok(acc)
}

/// Expected next-step entropy under the value-uncertainty curriculum minus
/// that under the uniform curriculum, summed exactly over goals.
pub fn entropy_increment(
    p: &DiscreteDist,
    uncertainty: &[f64],
    kernel: &OutcomeKernel,
    eps: f64,
) -> Result<f64> {
    check_len(p.len(), kernel.len())?;
    let p_u = uniform_curriculum(p)?;
    let p_vu = vu_curriculum(p, uncertainty)?;
    let mut acc = 0.0;
    for g in 0..p.len() {
        let coef = p_vu.prob(g) - p_u.prob(g);
        if coef != 0.0 {
            acc += coef * entropy_change(p, kernel.row(g), eps)?;
        }
    }
    Ok(acc)
}

/// Limit of the derivative of the entropy increment as the step goes to
/// zero, valid for arbitrary outcome kernels:
/// `sum_g (p_vu - p_u)(g) * sum_s (-rho(s|g) ln p(s) + p(s) ln p(s))`.
pub fn derivative_limit(
    p: &DiscreteDist,
    p_u: &DiscreteDist,
    p_vu: &DiscreteDist,
    kernel: &OutcomeKernel,
) -> Result<f64> {
    let n = p.len();
    check_len(n, p_u.len())?;
    check_len(n, p_vu.len())?;
    check_len(n, kernel.len())?;
    let neg_entropy: f64 = p
        .probs()
        .iter()
        .filter(|x| **x > 0.0)
        .map(|x| x * x.ln())
        .sum();
    let mut acc = 0.0;
    for g in 0..n {
        let coef = p_vu.prob(g) - p_u.prob(g);
        if coef == 0.0 {
            continue;
        }
        let cross: f64 = kernel
            .row(g)
            .probs()
            .iter()
            .zip(p.probs())
            .filter(|(r, _)| **r > 0.0)
            .map(|(r, ps)| -r * ps.ln())
            .sum();
        acc += coef * (cross + neg_entropy);
    }
    Ok(acc)
}

/// Covariance of `U(g)` and `ln p(g)` under the uniform measure on the
/// support of `p`. Returns `(covariance, mean U)`.
pub fn uniform_covariance(p: &DiscreteDist, uncertainty: &[f64]) -> Result<(f64, f64)> {
    check_len(p.len(), uncertainty.len())?;
    let pairs: Vec<(f64, f64)> = p
        .probs()
        .iter()
        .zip(uncertainty)
        .filter(|(ps, _)| **ps > 0.0)
        .map(|(ps, u)| (*u, ps.ln()))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Empty("support"));
    }
    let k = pairs.len() as f64;
    let mean_u = pairs.iter().map(|(u, _)| u).sum::<f64>() / k;
    let mean_l = pairs.iter().map(|(_, l)| l).sum::<f64>() / k;
    let cov = pairs
        .iter()
        .map(|(u, l)| (u - mean_u) * (l - mean_l))
        .sum::<f64>()
        / k;
    Ok((cov, mean_u))
}

/// Two-level Richardson extrapolation of `I(eps) / eps` over a geometric
/// grid with ratio 10 (`I(0) = 0`).
pub fn richardson_derivative(
    p: &DiscreteDist,
    uncertainty: &[f64],
    kernel: &OutcomeKernel,
) -> Result<f64> {
    let f = |eps: f64| entropy_increment(p, uncertainty, kernel, eps).map(|i| i / eps);
    let [h0, h1, h2] = step_grid(p);
    let (f0, f1, f2) = (f(h0)?, f(h1)?, f(h2)?);
    let r0 = (10.0 * f1 - f0) / 9.0;
    let r1 = (10.0 * f2 - f1) / 9.0;
    Ok((100.0 * r1 - r0) / 99.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(v: &[f64]) -> DiscreteDist {
        DiscreteDist::new(v.to_vec()).unwrap()
    }

    #[test]
    fn next_visited_examples() {
        let p = d(&[0.5, 0.5]);
        let rho = d(&[0.0, 1.0]);
        let n = next_visited(&p, &rho, 1.0).unwrap();
        assert_eq!(n.probs(), &[0.25, 0.75]);
        let n = next_visited(&p, &p, 3.7).unwrap();
        for (a, b) in n.probs().iter().zip(p.probs()) {
            assert!((a - b).abs() < 1e-15);
        }
        let n = next_visited(&p, &rho, 1e-12).unwrap();
        for (a, b) in n.probs().iter().zip(p.probs()) {
            assert!((a - b).abs() < 1e-11);
        }
        assert!(next_visited(&p, &rho, 0.0).is_err());
        assert!(next_visited(&p, &rho, -1.0).is_err());
        assert!(next_visited(&p, &d(&[1.0]), 0.1).is_err());
    }

    #[test]
    fn uniform_curriculum_examples() {
        assert_eq!(uniform_curriculum(&d(&[0.9, 0.1, 0.0])).unwrap().probs(), &[0.5, 0.5, 0.0]);
        let u = uniform_curriculum(&d(&[0.25; 4])).unwrap();
        assert!(u.probs().iter().all(|x| *x == 0.25));
        assert_eq!(uniform_curriculum(&d(&[0.0, 1.0])).unwrap().probs(), &[0.0, 1.0]);
    }

    #[test]
    fn vu_curriculum_examples() {
        let p = d(&[0.2, 0.3, 0.5]);
        let vu = vu_curriculum(&p, &[2.0, 2.0, 2.0]).unwrap();
        let u = uniform_curriculum(&p).unwrap();
        for (a, b) in vu.probs().iter().zip(u.probs()) {
            assert!((a - b).abs() < 1e-15);
        }
        let vu = vu_curriculum(&d(&[0.75, 0.25]), &[1.0, 3.0]).unwrap();
        assert_eq!(vu.probs(), &[0.25, 0.75]);
        let vu = vu_curriculum(&p, &[0.0, 4.0, 0.0]).unwrap();
        assert_eq!(vu.probs(), &[0.0, 1.0, 0.0]);
        // mass outside the support is ignored
        assert!(vu_curriculum(&d(&[1.0, 0.0]), &[0.0, 5.0]).is_err());
        assert!(vu_curriculum(&p, &[1.0]).is_err());
        assert!(vu_curriculum(&p, &[1.0, -1.0, 1.0]).is_err());
    }

    #[test]
    fn increment_vanishes_for_constant_uncertainty() {
        let p = d(&[0.1, 0.2, 0.3, 0.4]);
        let k = OutcomeKernel::exploit(4).unwrap();
        for eps in [1.0, 0.1, 1e-3, 1e-6] {
            assert_eq!(entropy_increment(&p, &[0.7; 4], &k, eps).unwrap(), 0.0);
        }
    }

    #[test]
    fn increment_vanishes_at_fixed_point_kernel() {
        let p = d(&[0.1, 0.2, 0.3, 0.4]);
        let rows = vec![p.clone(); 4];
        let k = OutcomeKernel::new(rows, vec![GoalTag::Info; 4]).unwrap();
        for eps in [1.0, 1e-3] {
            let i = entropy_increment(&p, &[1.0, 2.0, 3.0, 4.0], &k, eps).unwrap();
            assert!(i.abs() < 1e-16);
        }
    }

    #[test]
    fn stable_entropy_change_matches_direct_difference() {
        let p = d(&[0.1, 0.2, 0.3, 0.4, 0.0]);
        let rho = d(&[0.0, 0.5, 0.0, 0.25, 0.25]);
        let eps = 0.3;
        let direct = next_visited(&p, &rho, eps).unwrap().entropy() - p.entropy();
        let stable = entropy_change(&p, &rho, eps).unwrap();
        assert!((direct - stable).abs() < 1e-14);
    }

    #[test]
    fn two_state_worked_example() {
        // independent finite difference of the direct-difference entropy
        // at eps = 1e-6 against the closed-form derivative
        let p = d(&[0.75, 0.25]);
        let u = [1.0, 3.0];
        let k = OutcomeKernel::exploit(2).unwrap();
        let eps = 1e-6;
        let ratio = entropy_increment(&p, &u, &k, eps).unwrap() / eps;
        assert!((ratio - 0.2747).abs() < 1e-4);
        let p_u = uniform_curriculum(&p).unwrap();
        let p_vu = vu_curriculum(&p, &u).unwrap();
        let dl = derivative_limit(&p, &p_u, &p_vu, &k).unwrap();
        assert!((dl - 0.274_653_072_167_027).abs() < 1e-12, "{dl}");
        let (cov, mean_u) = uniform_covariance(&p, &u).unwrap();
        assert!((cov + 0.549_306_144_334_054_8).abs() < 1e-12, "{cov}");
        assert!((dl + cov / mean_u).abs() < 1e-15);
        let rich = richardson_derivative(&p, &u, &k).unwrap();
        assert!(((rich - dl) / dl).abs() < 1e-8);
    }

    #[test]
    fn step_grid_tracks_small_probabilities() {
        assert_eq!(step_grid(&d(&[0.5, 0.5])), EPS_GRID);
        let p = d(&[1e-6, 0.3, 0.7 - 1e-6]);
        let grid = step_grid(&p);
        assert!((grid[0] - 1e-8).abs() < 1e-20);
        let u = [2.0, 1.0, 0.5];
        let k = OutcomeKernel::exploit(3).unwrap();
        let dl = derivative_limit(
            &p,
            &uniform_curriculum(&p).unwrap(),
            &vu_curriculum(&p, &u).unwrap(),
            &k,
        )
        .unwrap();
        let rich = richardson_derivative(&p, &u, &k).unwrap();
        assert!(((rich - dl) / dl).abs() < 1e-8, "{rich} vs {dl}");
    }

    #[test]
    fn derivative_sign_follows_covariance() {
        // U increases with density => positive covariance => negative derivative
        let p = d(&[0.5, 0.3, 0.2]);
        let u = [3.0, 2.0, 1.0];
        let k = OutcomeKernel::exploit(3).unwrap();
        let dl = derivative_limit(
            &p,
            &uniform_curriculum(&p).unwrap(),
            &vu_curriculum(&p, &u).unwrap(),
            &k,
        )
        .unwrap();
        assert!(dl < 0.0);
        assert!(uniform_covariance(&p, &u).unwrap().0 > 0.0);
    }

    #[test]
    fn kernel_validation() {
        let bad = OutcomeKernel::new(
            vec![d(&[0.5, 0.5]), d(&[0.0, 1.0])],
            vec![GoalTag::Exploit, GoalTag::Exploit],
        );
        assert!(matches!(bad, Err(Error::Structural(_))));
        assert!(OutcomeKernel::new(vec![d(&[1.0, 0.0])], vec![GoalTag::Exploit]).is_err());
    }
}
