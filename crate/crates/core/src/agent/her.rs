//! Hindsight goal relabeling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::{ReplayBuffer, TransitionRecord};
use crate::envs::{Point, RewardConfig};
use crate::error::{Error, Result};

/// Relabel probabilities; the remaining mass keeps the original goal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HerConfig {
    pub curriculum: f64,
    pub future: f64,
}

impl Default for HerConfig {
    fn default() -> Self {
        Self {
            curriculum: 0.5,
            future: 0.3,
        }
    }
}

impl HerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.curriculum >= 0.0 && self.future >= 0.0 && self.curriculum + self.future <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "relabel probabilities must be non-negative and sum to at most 1, got {self:?}"
            )))
        }
    }

    pub fn choose<R: Rng + ?Sized>(&self, rng: &mut R) -> RelabelSource {
        let u: f64 = rng.random();
        if u < self.curriculum {
            RelabelSource::Curriculum
        } else if u < self.curriculum + self.future {
            RelabelSource::Future
        } else {
            RelabelSource::Original
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelabelSource {
    Curriculum,
    Future,
    Original,
}

fn relabeled(r: &TransitionRecord, goal: Point, reward: &RewardConfig) -> TransitionRecord {
    TransitionRecord {
        goal,
        reward: reward.reward(r.next_state, goal),
        ..*r
    }
}

/// Relabels each transition of a complete episode independently. Future
/// goals come from the achieved states at or after the transition's step.
pub fn her_relabel<R, F>(
    episode: &[TransitionRecord],
    config: &HerConfig,
    reward: &RewardConfig,
    mut curriculum_goal: F,
    rng: &mut R,
) -> Vec<(TransitionRecord, RelabelSource)>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Point,
{
    episode
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let source = config.choose(rng);
            let goal = match source {
                RelabelSource::Curriculum => curriculum_goal(rng),
                RelabelSource::Future => episode[rng.random_range(k..episode.len())].next_state,
                RelabelSource::Original => r.goal,
            };
            (relabeled(r, goal, reward), source)
        })
        .collect()
}

/// Samples `n` buffer records and relabels them the same way, using the
/// buffer's episode index for future goals.
pub fn sample_relabeled<R, F>(
    buffer: &ReplayBuffer,
    n: usize,
    config: &HerConfig,
    reward: &RewardConfig,
    mut curriculum_goal: F,
    rng: &mut R,
) -> Result<Vec<TransitionRecord>>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Point,
{
    if buffer.is_empty() {
        return Err(Error::Empty("replay buffer"));
    }
    Ok((0..n)
        .map(|_| {
            let i = buffer.sample_index(rng);
            let r = buffer.get(i).expect("index in range");
            let goal = match config.choose(rng) {
                RelabelSource::Curriculum => curriculum_goal(rng),
                RelabelSource::Future => buffer.future_state(i, rng),
                RelabelSource::Original => r.goal,
            };
            relabeled(r, goal, reward)
        })
        .collect())
}
