//! Entropy lower bound `H(V) >= ln(2 sqrt(Var V))` for log-concave laws.

use std::f64::consts::{E, PI};

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Log-concave families with closed-form entropy and variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LogConcaveFamily {
    Gaussian { sigma: f64 },
    Uniform { low: f64, high: f64 },
    Exponential { rate: f64 },
    Laplace { scale: f64 },
}

impl LogConcaveFamily {
    /// Builds a family from a name and a scale parameter. Uniform uses
    /// `[0, scale]`, exponential uses rate `1 / scale`.
    pub fn from_name(name: &str, scale: f64) -> Result<Self> {
        let family = match name {
            "gaussian" | "normal" => Self::Gaussian { sigma: scale },
            "uniform" => Self::Uniform {
                low: 0.0,
                high: scale,
            },
            "exponential" => Self::Exponential { rate: 1.0 / scale },
            "laplace" => Self::Laplace { scale },
            other => {
                return Err(Error::Unsupported(format!(
                    "distribution family {other:?} (supported: gaussian, uniform, exponential, laplace)"
                )))
            }
        };
        family.validate()?;
        Ok(family)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Gaussian { sigma } => sigma > 0.0 && sigma.is_finite(),
            Self::Uniform { low, high } => low.is_finite() && high.is_finite() && high > low,
            Self::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            Self::Laplace { scale } => scale > 0.0 && scale.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid parameters for {self:?}")))
        }
    }

    /// Differential entropy in nats.
    pub fn entropy(&self) -> f64 {
        match *self {
            Self::Gaussian { sigma } => 0.5 * (2.0 * PI * E * sigma * sigma).ln(),
            Self::Uniform { low, high } => (high - low).ln(),
            Self::Exponential { rate } => 1.0 - rate.ln(),
            Self::Laplace { scale } => 1.0 + (2.0 * scale).ln(),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Self::Gaussian { sigma } => sigma * sigma,
            Self::Uniform { low, high } => (high - low).powi(2) / 12.0,
            Self::Exponential { rate } => 1.0 / (rate * rate),
            Self::Laplace { scale } => 2.0 * scale * scale,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Gaussian { sigma } => Normal::new(0.0, sigma).expect("validated").sample(rng),
            Self::Uniform { low, high } => Uniform::new(low, high).expect("validated").sample(rng),
            Self::Exponential { rate } => Exp::new(rate).expect("validated").sample(rng),
            Self::Laplace { scale } => {
                let u: f64 = rng.random_range(-0.5..0.5);
                -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub entropy: f64,
    pub bound: f64,
    pub gap: f64,
    pub holds: bool,
}

/// Analytic check of `H >= ln(2 sqrt(Var))`.
pub fn check_prop1_bound(family: &LogConcaveFamily) -> Result<BoundReport> {
    family.validate()?;
    let entropy = family.entropy();
    let bound = (2.0 * family.variance().sqrt()).ln();
    Ok(BoundReport {
        entropy,
        bound,
        gap: entropy - bound,
        holds: entropy >= bound,
    })
}

/// Sample-based smoke test: sample variance and a histogram entropy
/// estimate from `n` draws, compared with the analytic values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalBoundReport {
    pub entropy_estimate: f64,
    pub variance_estimate: f64,
    pub bound_estimate: f64,
    pub holds: bool,
    /// Relative error of the entropy estimate against the analytic entropy,
    /// measured on `exp(H)` so that scale does not matter.
    pub entropy_rel_error: f64,
    pub variance_rel_error: f64,
}

pub fn empirical_prop1_bound<R: Rng + ?Sized>(
    family: &LogConcaveFamily,
    n: usize,
    bins: usize,
    rng: &mut R,
) -> Result<EmpiricalBoundReport> {
    family.validate()?;
    if n < 2 || bins == 0 {
        return Err(Error::InvalidArgument("need n >= 2 samples and bins >= 1".into()));
    }
    let xs: Vec<f64> = (0..n).map(|_| family.sample(rng)).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for x in &xs {
        let k = (((x - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let entropy: f64 = counts
        .iter()
        .filter(|c| **c > 0)
        .map(|c| {
            let p = *c as f64 / n as f64;
            -p * (p / width).ln()
        })
        .sum();
    let bound = (2.0 * var.sqrt()).ln();
    Ok(EmpiricalBoundReport {
        entropy_estimate: entropy,
        variance_estimate: var,
        bound_estimate: bound,
        holds: entropy >= bound,
        entropy_rel_error: ((entropy - family.entropy()).exp() - 1.0).abs(),
        variance_rel_error: (var / family.variance() - 1.0).abs(),
    })
}

/// `H - ln(2 sigma)` for any Gaussian: `0.5 ln(pi e / 2)`.
pub fn gaussian_gap() -> f64 {
    0.5 * (PI * E / 2.0).ln()
}
