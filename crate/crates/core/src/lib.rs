//! Goal-conditioned curriculum reinforcement learning on point mazes.
//!
//! The crate covers environments, visited-state density models, an
//! ensemble soft actor-critic agent with hindsight relabeling, curriculum
//! goal samplers (target, visited, skewed, value-uncertainty), evaluation
//! metrics, exact entropy-increment checks, and experiment orchestration.

pub mod agent;
pub mod curriculum;
pub mod density;
pub mod dist;
pub mod envs;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod theory;

pub use error::{Error, Result};
