//! Experiment runner: configuration, training loops, certification and
//! the eyeRNN/roaRNN ablation.

pub mod ablate;
pub mod certify;
pub mod config;
pub mod train;

pub use config::{preset, ExperimentConfig, ModelKind, Task};
pub use train::{run_experiment, Control, MetricRow, ModelRef, RunSummary, Split};
