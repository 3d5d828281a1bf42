//! Ensemble soft actor-critic, replay storage and hindsight relabeling.

pub mod buffer;
pub mod her;
pub mod normalizer;
pub mod sac;

pub use buffer::{ReplayBuffer, TransitionRecord};
pub use her::{her_relabel, sample_relabeled, HerConfig, RelabelSource};
pub use normalizer::Normalizer;
pub use sac::{population_variance, ActMode, AgentConfig, Batch, SacAgent, TrainStats};
