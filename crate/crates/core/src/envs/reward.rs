//! Goal-conditioned rewards from identity discriminators.

use serde::{Deserialize, Serialize};

use super::maze::Point;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardShape {
    Sparse,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub shape: RewardShape,
    /// Success radius, length units. Used by the sparse shape and by
    /// success checks.
    pub threshold: f64,
    /// Gaussian scale, length units (dense shape).
    pub scale: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            shape: RewardShape::Sparse,
            threshold: 0.3,
            scale: 1.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "reward threshold must be positive, got {}",
                self.threshold
            )));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "reward scale must be positive, got {}",
                self.scale
            )));
        }
        Ok(())
    }

    pub fn reward(&self, s: Point, g: Point) -> f64 {
        match self.shape {
            RewardShape::Sparse => sparse_reward(s, g, self),
            RewardShape::Dense => dense_reward(s, g, self),
        }
    }

    /// `‖s − g‖ ≤ threshold`, inclusive.
    pub fn reached(&self, s: Point, g: Point) -> bool {
        distance(s, g) <= self.threshold
    }
}

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// 0 within the success radius (inclusive), −1 otherwise.
pub fn sparse_reward(s: Point, g: Point, cfg: &RewardConfig) -> f64 {
    if distance(s, g) <= cfg.threshold {
        0.0
    } else {
        -1.0
    }
}

/// Log-Gaussian discriminator without its normalizer: −‖s − g‖² / (2σ²).
pub fn dense_reward(s: Point, g: Point, cfg: &RewardConfig) -> f64 {
    let dx = s[0] - g[0];
    let dy = s[1] - g[1];
    -(dx * dx + dy * dy) / (2.0 * cfg.scale * cfg.scale)
}
