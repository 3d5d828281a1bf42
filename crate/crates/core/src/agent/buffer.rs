//! FIFO replay buffer with per-episode future-state lookup.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::Point;
use crate::error::{Error, Result};

/// One environment step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub state: Point,
    pub action: Point,
    pub reward: f64,
    pub next_state: Point,
    pub goal: Point,
    pub terminal: bool,
    pub episode_id: u64,
    pub step_index: usize,
}

/// Ring store of transitions. Episodes are inserted whole, so the later
/// steps of an episode are always newer than (and outlive) its earlier ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    records: Vec<TransitionRecord>,
    /// Number of later steps of the same episode stored after each slot.
    remaining: Vec<usize>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument("buffer capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            records: Vec::new(),
            remaining: Vec::new(),
            head: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn slot(&self, i: usize) -> usize {
        if self.records.len() < self.capacity {
            i
        } else {
            (self.head + i) % self.capacity
        }
    }

    /// Record `i` in insertion order (0 is the oldest retained).
    pub fn get(&self, i: usize) -> Option<&TransitionRecord> {
        (i < self.len()).then(|| &self.records[self.slot(i)])
    }

    pub fn iter(&self) -> impl Iterator<Item = &TransitionRecord> + '_ {
        (0..self.len()).map(move |i| &self.records[self.slot(i)])
    }

    fn push_one(&mut self, record: TransitionRecord, remaining: usize) {
        if self.records.len() < self.capacity {
            self.records.push(record);
            self.remaining.push(remaining);
        } else {
            self.records[self.head] = record;
            self.remaining[self.head] = remaining;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Appends a complete episode in step order.
    pub fn push_episode(&mut self, episode: &[TransitionRecord]) {
        let n = episode.len();
        for (k, r) in episode.iter().enumerate() {
            self.push_one(*r, n - 1 - k);
        }
    }

    /// Appends a single record as its own one-step episode.
    pub fn push(&mut self, record: TransitionRecord) {
        self.push_one(record, 0);
    }

    /// Uniform index in insertion order.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(0..self.len())
    }

    /// Achieved state from a uniformly chosen step at or after record `i`
    /// in the same episode. The last step only offers its own next state.
    pub fn future_state<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Point {
        let slot = self.slot(i);
        let offset = rng.random_range(0..=self.remaining[slot]);
        let j = (i + offset).min(self.len() - 1);
        self.records[self.slot(j)].next_state
    }

    /// Every achieved state currently stored.
    pub fn next_states(&self) -> Vec<Point> {
        self.iter().map(|r| r.next_state).collect()
    }
}
