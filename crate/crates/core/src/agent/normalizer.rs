//! Running mean/variance observation normalizer.

use serde::{Deserialize, Serialize};

use crate::envs::Point;

/// Per-dimension running statistics (Welford updates) with clipping of the
/// standardized output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    count: u64,
    mean: Point,
    m2: Point,
    clip: f64,
    eps: f64,
    enabled: bool,
}

impl Normalizer {
    pub fn new(clip: f64, enabled: bool) -> Self {
        Self {
            count: 0,
            mean: [0.0; 2],
            m2: [0.0; 2],
            clip,
            eps: 1e-8,
            enabled,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> Point {
        self.mean
    }

    /// Population variance; `1.0` before any update.
    pub fn variance(&self) -> Point {
        if self.count == 0 {
            return [1.0; 2];
        }
        [self.m2[0] / self.count as f64, self.m2[1] / self.count as f64]
    }

    pub fn update(&mut self, x: Point) {
        self.count += 1;
        let n = self.count as f64;
        for d in 0..2 {
            let delta = x[d] - self.mean[d];
            self.mean[d] += delta / n;
            self.m2[d] += delta * (x[d] - self.mean[d]);
        }
    }

    pub fn update_all(&mut self, xs: impl IntoIterator<Item = Point>) {
        for x in xs {
            self.update(x);
        }
    }

    pub fn normalize(&self, x: Point) -> Point {
        if !self.enabled {
            return x;
        }
        let var = self.variance();
        let mut out = [0.0; 2];
        for d in 0..2 {
            let z = (x[d] - self.mean[d]) / (var[d] + self.eps).sqrt();
            out[d] = z.clamp(-self.clip, self.clip);
        }
        out
    }
}
