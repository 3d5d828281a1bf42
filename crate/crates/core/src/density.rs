//! Visited-state density estimation and density skewing.
//!
//! Two deterministic estimators are provided: a fixed-box histogram (the
//! default, exact counts) and a product Gaussian kernel estimator. Both
//! expose `log_prob`, which feeds the skewed goal weights `p(x)^alpha`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dist::{entropy, DiscreteDist};
use crate::envs::Point;
use crate::error::{Error, Result};

/// Mass floor applied before taking logs of histogram probabilities.
pub const PROB_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    Histogram,
    Kernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityConfig {
    pub kind: DensityKind,
    /// Histogram bins per dimension.
    pub bins: usize,
    /// Kernel bandwidth; `None` selects Scott's rule per dimension.
    pub bandwidth: Option<f64>,
    /// Kernel estimator keeps at most this many samples.
    pub max_kernel_samples: usize,
    /// Refit the model every this many epochs.
    pub refit_period: usize,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            kind: DensityKind::Histogram,
            bins: 25,
            bandwidth: None,
            max_kernel_samples: 2000,
            refit_period: 1,
        }
    }
}

impl DensityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::Config("density.bins must be positive".into()));
        }
        if let Some(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Config(format!(
                    "density.bandwidth must be positive, got {h}"
                )));
            }
        }
        if self.max_kernel_samples == 0 {
            return Err(Error::Config(
                "density.max_kernel_samples must be positive".into(),
            ));
        }
        if self.refit_period == 0 {
            return Err(Error::Config("density.refit_period must be positive".into()));
        }
        Ok(())
    }
}

/// Axis-aligned state box `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    pub lo: Point,
    pub hi: Point,
}

impl StateBox {
    pub fn new(lo: Point, hi: Point) -> Result<Self> {
        if !(lo[0] < hi[0] && lo[1] < hi[1]) {
            return Err(Error::InvalidArgument(format!(
                "degenerate state box {lo:?}..{hi:?}"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn volume(&self) -> f64 {
        (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])
    }
}

/// Fixed-box 2D histogram. Points outside the box fall into edge bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    bounds: StateBox,
    bins: [usize; 2],
    counts: Vec<u64>,
    total: u64,
}

impl Histogram {
    pub fn new(bounds: StateBox, bins: [usize; 2]) -> Result<Self> {
        if bins[0] == 0 || bins[1] == 0 {
            return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
        }
        Ok(Self {
            bounds,
            bins,
            counts: vec![0; bins[0] * bins[1]],
            total: 0,
        })
    }

    pub fn bounds(&self) -> StateBox {
        self.bounds
    }

    pub fn bins(&self) -> [usize; 2] {
        self.bins
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn bin_count(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_volume(&self) -> f64 {
        self.bounds.volume() / (self.bins[0] * self.bins[1]) as f64
    }

    fn axis_bin(&self, x: f64, axis: usize) -> usize {
        let lo = self.bounds.lo[axis];
        let width = (self.bounds.hi[axis] - lo) / self.bins[axis] as f64;
        let k = ((x - lo) / width).floor();
        if k.is_nan() || k < 0.0 {
            0
        } else {
            (k as usize).min(self.bins[axis] - 1)
        }
    }

    /// Flat bin index, row-major over `(x bin, y bin)` with x fastest.
    pub fn bin_index(&self, p: Point) -> usize {
        self.axis_bin(p[1], 1) * self.bins[0] + self.axis_bin(p[0], 0)
    }

    pub fn bin_center(&self, index: usize) -> Point {
        let (ix, iy) = (index % self.bins[0], index / self.bins[0]);
        let w = [
            (self.bounds.hi[0] - self.bounds.lo[0]) / self.bins[0] as f64,
            (self.bounds.hi[1] - self.bounds.lo[1]) / self.bins[1] as f64,
        ];
        [
            self.bounds.lo[0] + (ix as f64 + 0.5) * w[0],
            self.bounds.lo[1] + (iy as f64 + 0.5) * w[1],
        ]
    }

    pub fn add(&mut self, p: Point) {
        let i = self.bin_index(p);
        self.counts[i] += 1;
        self.total += 1;
    }

    /// Normalized bin masses. All zeros when empty.
    pub fn masses(&self) -> Vec<f64> {
        if self.total == 0 {
            return vec![0.0; self.counts.len()];
        }
        let t = self.total as f64;
        self.counts.iter().map(|c| *c as f64 / t).collect()
    }

    /// Shannon entropy (nats) of the bin masses.
    pub fn entropy(&self) -> f64 {
        entropy(&self.masses())
    }

    pub fn log_prob(&self, p: Point) -> f64 {
        let mass = if self.total == 0 {
            0.0
        } else {
            self.counts[self.bin_index(p)] as f64 / self.total as f64
        };
        (mass.max(PROB_FLOOR) / self.bin_volume()).ln()
    }

    /// Writes `x,y,count` rows, one per bin.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "y", "count"])?;
        for (i, c) in self.counts.iter().enumerate() {
            let [x, y] = self.bin_center(i);
            w.write_record([x.to_string(), y.to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Product Gaussian kernel density estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDensity {
    samples: Vec<Point>,
    bandwidth: [f64; 2],
    total_count: usize,
}

impl KernelDensity {
    pub fn bandwidth(&self) -> [f64; 2] {
        self.bandwidth
    }

    pub fn samples(&self) -> &[Point] {
        &self.samples
    }

    pub fn log_prob(&self, p: Point) -> f64 {
        let [hx, hy] = self.bandwidth;
        let log_norm = -(2.0 * std::f64::consts::PI * hx * hy).ln() - (self.samples.len() as f64).ln();
        let exps: Vec<f64> = self
            .samples
            .iter()
            .map(|s| {
                let zx = (p[0] - s[0]) / hx;
                let zy = (p[1] - s[1]) / hy;
                -0.5 * (zx * zx + zy * zy)
            })
            .collect();
        log_norm + log_sum_exp(&exps)
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DensityModel {
    Histogram(Histogram),
    Kernel(KernelDensity),
}

impl DensityModel {
    /// Fits a model to visited states. Deterministic and invariant to the
    /// order of `samples`.
    pub fn fit(samples: &[Point], config: &DensityConfig, bounds: StateBox) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("density samples"));
        }
        match config.kind {
            DensityKind::Histogram => {
                let mut h = Histogram::new(bounds, [config.bins, config.bins])?;
                for p in samples {
                    h.add(*p);
                }
                Ok(Self::Histogram(h))
            }
            DensityKind::Kernel => {
                let mut sorted = samples.to_vec();
                sorted.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
                let total_count = sorted.len();
                let keep = config.max_kernel_samples.min(total_count);
                let retained: Vec<Point> = (0..keep)
                    .map(|i| sorted[i * total_count / keep])
                    .collect();
                let bandwidth = match config.bandwidth {
                    Some(h) => [h, h],
                    None => scott_bandwidth(&sorted, bounds),
                };
                Ok(Self::Kernel(KernelDensity {
                    samples: retained,
                    bandwidth,
                    total_count,
                }))
            }
        }
    }

    pub fn kind(&self) -> DensityKind {
        match self {
            Self::Histogram(_) => DensityKind::Histogram,
            Self::Kernel(_) => DensityKind::Kernel,
        }
    }

    /// Number of samples the model was fitted on.
    pub fn total_count(&self) -> usize {
        match self {
            Self::Histogram(h) => h.total as usize,
            Self::Kernel(k) => k.total_count,
        }
    }

    /// Log density; finite everywhere for histograms because of the floor.
    pub fn log_prob(&self, p: Point) -> f64 {
        match self {
            Self::Histogram(h) => h.log_prob(p),
            Self::Kernel(k) => k.log_prob(p),
        }
    }

    pub fn as_histogram(&self) -> Option<&Histogram> {
        match self {
            Self::Histogram(h) => Some(h),
            Self::Kernel(_) => None,
        }
    }
}

/// Scott's rule `sigma * n^(-1/6)` per dimension; falls back to 1% of the
/// box width when the spread is zero.
fn scott_bandwidth(samples: &[Point], bounds: StateBox) -> [f64; 2] {
    let n = samples.len() as f64;
    let factor = n.powf(-1.0 / 6.0);
    let mut out = [0.0; 2];
    for (axis, slot) in out.iter_mut().enumerate() {
        let mean = samples.iter().map(|p| p[axis]).sum::<f64>() / n;
        let var = samples.iter().map(|p| (p[axis] - mean).powi(2)).sum::<f64>() / n;
        let h = var.sqrt() * factor;
        let fallback = 0.01 * (bounds.hi[axis] - bounds.lo[axis]);
        *slot = if h > 0.0 { h } else { fallback };
    }
    out
}

/// Skew exponent and candidate pool size for density-skewed sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewConfig {
    pub alpha: f64,
    pub candidates: usize,
}

impl SkewConfig {
    pub fn validate(&self) -> Result<()> {
        validate_alpha(self.alpha)?;
        if self.candidates == 0 {
            return Err(Error::InvalidArgument("candidate count must be positive".into()));
        }
        Ok(())
    }
}

pub fn validate_alpha(alpha: f64) -> Result<()> {
    if (-1.0..0.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "skew exponent must lie in [-1, 0), got {alpha}"
        )))
    }
}

/// Weights proportional to `p(candidate)^alpha`, computed in log space.
pub fn skew_weights(model: &DensityModel, candidates: &[Point], alpha: f64) -> Result<DiscreteDist> {
    let log_densities: Vec<f64> = candidates.iter().map(|c| model.log_prob(*c)).collect();
    skew_weights_from_log_densities(&log_densities, alpha)
}

pub fn skew_weights_from_log_densities(log_densities: &[f64], alpha: f64) -> Result<DiscreteDist> {
    validate_alpha(alpha)?;
    if log_densities.is_empty() {
        return Err(Error::Empty("skew candidates"));
    }
    let logits: Vec<f64> = log_densities.iter().map(|l| alpha * l).collect();
    DiscreteDist::from_log_weights(&logits)
}

/// Entropy (nats) of the histogram's normalized counts.
pub fn coverage_entropy(model: &DensityModel) -> Result<f64> {
    match model {
        DensityModel::Histogram(h) => Ok(h.entropy()),
        DensityModel::Kernel(_) => Err(Error::Unsupported(
            "coverage entropy requires a histogram model".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_box() -> StateBox {
        StateBox::new([0.0, 0.0], [1.0, 1.0]).unwrap()
    }

    fn hist_cfg(bins: usize) -> DensityConfig {
        DensityConfig {
            bins,
            ..DensityConfig::default()
        }
    }

    #[test]
    fn empty_fit_is_error() {
        assert!(DensityModel::fit(&[], &hist_cfg(10), unit_box()).is_err());
    }

    #[test]
    fn degenerate_samples_fill_one_bin() {
        let samples = vec![[0.0, 0.0]; 100];
        let m = DensityModel::fit(&samples, &hist_cfg(10), unit_box()).unwrap();
        let h = m.as_histogram().unwrap();
        assert_eq!(h.counts().iter().filter(|c| **c > 0).count(), 1);
        assert_eq!(h.counts()[0], 100);
        assert_eq!(m.total_count(), 100);
        let peak = m.log_prob([0.0, 0.0]);
        assert!((peak - (1.0 / h.bin_volume()).ln()).abs() < 1e-12);
        assert!(peak > m.log_prob([0.5, 0.5]));
        assert_eq!(coverage_entropy(&m).unwrap(), 0.0);
    }

    #[test]
    fn uniform_samples_binomial_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let samples: Vec<Point> = (0..10_000)
            .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let m = DensityModel::fit(&samples, &hist_cfg(10), unit_box()).unwrap();
        let sigma = (10_000.0f64 * 0.01 * 0.99).sqrt();
        for c in m.as_histogram().unwrap().counts() {
            assert!((*c as f64 - 100.0).abs() <= 3.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn floor_and_equal_bins() {
        let b = StateBox::new([0.0, 0.0], [2.0, 1.0]).unwrap();
        let mut h = Histogram::new(b, [2, 1]).unwrap();
        h.add([0.5, 0.5]);
        h.add([1.5, 0.5]);
        let m = DensityModel::Histogram(h);
        assert!((m.log_prob([0.2, 0.2]) - 0.5f64.ln()).abs() < 1e-15);
        assert!((m.log_prob([1.9, 0.2]) - 0.5f64.ln()).abs() < 1e-15);

        let m = DensityModel::fit(&[[0.05, 0.05]], &hist_cfg(10), unit_box()).unwrap();
        let vol = 0.01;
        assert!((m.log_prob([0.95, 0.95]) - (PROB_FLOOR / vol).ln()).abs() < 1e-12);
        assert!(m.log_prob([0.95, 0.95]).is_finite());
    }

    #[test]
    fn kernel_two_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut samples = Vec::new();
        for c in [[0.25, 0.25], [0.75, 0.75]] {
            for _ in 0..500 {
                samples.push([
                    c[0] + 0.03 * (rng.random::<f64>() - 0.5),
                    c[1] + 0.03 * (rng.random::<f64>() - 0.5),
                ]);
            }
        }
        let cfg = DensityConfig {
            kind: DensityKind::Kernel,
            ..DensityConfig::default()
        };
        let m = DensityModel::fit(&samples, &cfg, unit_box()).unwrap();
        let mid = m.log_prob([0.5, 0.5]);
        assert!(m.log_prob([0.25, 0.25]) > mid);
        assert!(m.log_prob([0.75, 0.75]) > mid);
        let DensityModel::Kernel(k) = &m else { unreachable!() };
        assert!(k.bandwidth().iter().all(|h| *h > 0.0));
        assert!(coverage_entropy(&m).is_err());
    }

    fn integrate(m: &DensityModel, b: StateBox, n: usize) -> f64 {
        let dx = (b.hi[0] - b.lo[0]) / n as f64;
        let dy = (b.hi[1] - b.lo[1]) / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let p = [b.lo[0] + (i as f64 + 0.5) * dx, b.lo[1] + (j as f64 + 0.5) * dy];
                acc += m.log_prob(p).exp();
            }
        }
        acc * dx * dy
    }

    #[test]
    fn densities_integrate_to_one() {
        let b = StateBox::new([0.0, 0.0], [11.0, 11.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples: Vec<Point> = (0..3000)
            .map(|_| [2.0 + 7.0 * rng.random::<f64>(), 2.0 + 7.0 * rng.random::<f64>()])
            .collect();
        let h = DensityModel::fit(&samples, &DensityConfig::default(), b).unwrap();
        assert!((integrate(&h, b, 500) - 1.0).abs() < 0.01);
        let k = DensityModel::fit(
            &samples,
            &DensityConfig {
                kind: DensityKind::Kernel,
                ..DensityConfig::default()
            },
            b,
        )
        .unwrap();
        assert!((integrate(&k, b, 300) - 1.0).abs() < 0.01);
    }

    #[test]
    fn skew_examples() {
        let logp: Vec<f64> = [0.5f64, 0.25, 0.25].iter().map(|p| p.ln()).collect();
        let w = skew_weights_from_log_densities(&logp, -1.0).unwrap();
        for (a, b) in w.probs().iter().zip([0.2, 0.4, 0.4]) {
            assert!((a - b).abs() < 1e-14);
        }
        let w = skew_weights_from_log_densities(&logp, -1e-12).unwrap();
        for p in w.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-9);
        }
        let same = vec![-2.0; 4];
        for alpha in [-1.0, -0.5, -0.01] {
            let w = skew_weights_from_log_densities(&same, alpha).unwrap();
            assert!(w.probs().iter().all(|p| (p - 0.25).abs() < 1e-15));
        }
        assert!(skew_weights_from_log_densities(&logp, 0.0).is_err());
        assert!(skew_weights_from_log_densities(&logp, -1.5).is_err());
        assert!(skew_weights_from_log_densities(&[], -1.0).is_err());
    }

    #[test]
    fn entropy_of_counts() {
        let b = StateBox::new([0.0, 0.0], [2.0, 1.0]).unwrap();
        let mut h = Histogram::new(b, [2, 1]).unwrap();
        for _ in 0..3 {
            h.add([0.5, 0.5]);
        }
        h.add([1.5, 0.5]);
        let e = coverage_entropy(&DensityModel::Histogram(h)).unwrap();
        assert!((e - 0.562_335_144_618_9).abs() < 1e-12);

        let mut u = Histogram::new(unit_box(), [4, 4]).unwrap();
        for i in 0..16 {
            u.add(u.bin_center(i));
        }
        assert!((u.entropy() - 16f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn csv_export() {
        let mut h = Histogram::new(unit_box(), [2, 2]).unwrap();
        h.add([0.1, 0.9]);
        let mut out = Vec::new();
        h.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.contains("0.25,0.75,1"));
    }

    proptest! {
        #[test]
        fn skew_weights_are_a_monotone_distribution(
            logp in proptest::collection::vec(-10.0..3.0f64, 1..40),
            alpha in -1.0..-0.01f64,
        ) {
            let w = skew_weights_from_log_densities(&logp, alpha).unwrap();
            let sum: f64 = w.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(w.probs().iter().all(|p| *p > 0.0));
            for i in 0..logp.len() {
                for j in 0..logp.len() {
                    if logp[i] < logp[j] {
                        prop_assert!(w.prob(i) > w.prob(j));
                    }
                }
            }
        }

        #[test]
        fn fit_is_permutation_invariant(
            pts in proptest::collection::vec((0.0..1.0f64, 0.0..1.0f64), 1..60),
            seed in 0u64..1000,
        ) {
            let samples: Vec<Point> = pts.iter().map(|(x, y)| [*x, *y]).collect();
            let mut shuffled = samples.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..shuffled.len()).rev() {
                let j = rng.random_range(0..=i);
                shuffled.swap(i, j);
            }
            for kind in [DensityKind::Histogram, DensityKind::Kernel] {
                let cfg = DensityConfig { kind, max_kernel_samples: 16, ..DensityConfig::default() };
                let a = DensityModel::fit(&samples, &cfg, unit_box()).unwrap();
                let b = DensityModel::fit(&shuffled, &cfg, unit_box()).unwrap();
                prop_assert_eq!(a, b);
            }
        }

        /// Resampling with alpha = -1 moves the empirical distribution toward
        /// uniform over its support.
        #[test]
        fn skew_resampling_reduces_kl_to_uniform(
            raw in proptest::collection::vec(1u64..50, 2..12),
        ) {
            prop_assume!(raw.iter().any(|c| *c != raw[0]));
            // one sample per count unit, placed in distinct bins of a 1D strip
            let bins = raw.len();
            let b = StateBox::new([0.0, 0.0], [bins as f64, 1.0]).unwrap();
            let mut h = Histogram::new(b, [bins, 1]).unwrap();
            let mut buffer = Vec::new();
            for (i, c) in raw.iter().enumerate() {
                for _ in 0..*c {
                    let p = [i as f64 + 0.5, 0.5];
                    h.add(p);
                    buffer.push(p);
                }
            }
            let model = DensityModel::Histogram(h);
            let uniform = vec![1.0 / bins as f64; bins];
            let raw_emp = model.as_histogram().unwrap().masses();
            let weights = skew_weights(&model, &buffer, -1.0).unwrap();
            // exact resampling distribution aggregated per bin
            let mut resampled = vec![0.0; bins];
            for (p, w) in buffer.iter().zip(weights.probs()) {
                resampled[p[0] as usize] += w;
            }
            let before = crate::dist::kl_divergence(&uniform, &raw_emp).unwrap();
            let after = crate::dist::kl_divergence(&uniform, &resampled).unwrap();
            prop_assert!(after < before, "after {after} before {before}");
        }
    }
}
