//! Exact finite probability vectors.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Input sums must be within this of 1 before renormalization.
const SUM_TOLERANCE: f64 = 1e-9;

/// A probability vector over an enumerated set `0..len`.
///
/// Entries are non-negative and sum to one (within 1e-12 after
/// construction). The support is the set of strictly positive entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDist {
    probs: Vec<f64>,
}

impl DiscreteDist {
    /// Validates a probability vector and renormalizes away rounding noise.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("probability vector"));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "probability entries must be finite and non-negative, got {p}"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self::normalize_unchecked(probs, sum))
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("weight vector"));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weights must be finite and non-negative, got {w}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidArgument("weights sum to zero".into()));
        }
        Ok(Self::normalize_unchecked(weights.to_vec(), sum))
    }

    /// Softmax of log-weights. `-inf` entries get zero mass.
    pub fn from_log_weights(log_weights: &[f64]) -> Result<Self> {
        if log_weights.is_empty() {
            return Err(Error::Empty("log-weight vector"));
        }
        if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(Error::InvalidArgument(
                "log-weights must be finite or -inf".into(),
            ));
        }
        let max = log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::InvalidArgument("all log-weights are -inf".into()));
        }
        let weights: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
        let sum: f64 = weights.iter().sum();
        Ok(Self::normalize_unchecked(weights, sum))
    }

    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Empty("uniform support"));
        }
        Ok(Self {
            probs: vec![1.0 / len as f64; len],
        })
    }

    pub fn point_mass(len: usize, index: usize) -> Result<Self> {
        if index >= len {
            return Err(Error::IndexOutOfRange { index, len });
        }
        let mut probs = vec![0.0; len];
        probs[index] = 1.0;
        Ok(Self { probs })
    }

    fn normalize_unchecked(mut probs: Vec<f64>, sum: f64) -> Self {
        for p in probs.iter_mut() {
            *p /= sum;
        }
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.probs[index]
    }

    /// Support mask: `true` where the probability is strictly positive.
    pub fn support(&self) -> Vec<bool> {
        self.probs.iter().map(|p| *p > 0.0).collect()
    }

    pub fn support_size(&self) -> usize {
        self.probs.iter().filter(|p| **p > 0.0).count()
    }

    /// Shannon entropy in nats, with `0 log 0 = 0`.
    pub fn entropy(&self) -> f64 {
        entropy(&self.probs)
    }

    /// Builds a reusable sampler over the indices.
    pub fn sampler(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(&self.probs).expect("validated distribution")
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sampler().sample(rng)
    }
}

/// Shannon entropy (nats) of a probability vector, `0 log 0 = 0`.
pub fn entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

/// KL(p || q) in nats. Infinite when p puts mass where q has none.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    let mut kl = 0.0;
    for (pi, qi) in p.iter().zip(q) {
        if *pi > 0.0 {
            if *qi <= 0.0 {
                return Ok(f64::INFINITY);
            }
            kl += pi * (pi / qi).ln();
        }
    }
    Ok(kl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_bad_vectors() {
        assert!(DiscreteDist::new(vec![]).is_err());
        assert!(DiscreteDist::new(vec![0.5, 0.6]).is_err());
        assert!(DiscreteDist::new(vec![1.5, -0.5]).is_err());
        assert!(DiscreteDist::from_weights(&[0.0, 0.0]).is_err());
        assert!(DiscreteDist::from_log_weights(&[f64::NEG_INFINITY]).is_err());
    }

    #[test]
    fn log_weights_match_weights() {
        let w = [2.0, 12.0];
        let a = DiscreteDist::from_weights(&w).unwrap();
        let lw: Vec<f64> = w.iter().map(|x: &f64| x.ln()).collect();
        let b = DiscreteDist::from_log_weights(&lw).unwrap();
        for (x, y) in a.probs().iter().zip(b.probs()) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!((a.prob(0) - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn entropy_conventions() {
        assert_eq!(DiscreteDist::point_mass(4, 2).unwrap().entropy(), 0.0);
        let u = DiscreteDist::uniform(8).unwrap();
        assert!((u.entropy() - 8f64.ln()).abs() < 1e-14);
        let h = entropy(&[0.75, 0.25, 0.0]);
        assert!((h - 0.562_335_144_618_9).abs() < 1e-12);
    }

    #[test]
    fn sampling_respects_support() {
        let d = DiscreteDist::new(vec![0.0, 1.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(d.sample(&mut rng), 1);
        }
        assert_eq!(d.support(), vec![false, true, false]);
    }

    #[test]
    fn kl_basics() {
        let p = [0.5, 0.5];
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        assert_eq!(kl_divergence(&p, &[1.0, 0.0]).unwrap(), f64::INFINITY);
        assert!(kl_divergence(&p, &[1.0]).is_err());
    }
}
