//! Experiment orchestration: configuration, the training loop, checkpoints,
//! coverage comparison and the theory verification suite.

pub mod checkpoint;
pub mod config;
pub mod report;
pub mod train;
pub mod verify;

pub use checkpoint::TrainingState;
pub use config::{EnvConfig, ExperimentConfig, TrainConfig};
pub use report::{coverage_report, format_report, MethodCoverage, ThresholdStat, COVERAGE_THRESHOLDS};
pub use train::{evaluate_checkpoint, read_rows, train, RunManifest, RunStatus, SeedRun, TrainOptions};
pub use verify::{all_passed, registered_checks, verify_theory, CheckLine, CheckVerdict, SuiteConfig};
