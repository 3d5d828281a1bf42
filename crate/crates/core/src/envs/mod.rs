//! Point-maze environments, gridworld MDPs, and goal-conditioned rewards.

pub mod grid;
pub mod maze;
pub mod reward;

pub use grid::{grid_step, GridMdp, Move};
pub use maze::{builtin_names, Cell, ContinuousState, MazeSpec, Point};
pub use reward::{dense_reward, distance, sparse_reward, RewardConfig, RewardShape};
