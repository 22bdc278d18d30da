//! Experiment runner: configuration, training runs, strategy sweeps,
//! metrics and CSV reports.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod report;
pub mod run;

pub use config::ExperimentConfig;
pub use error::{ErrorClass, HarnessError, Result};
pub use matrix::{run_matrix, strategy_grid, MatrixRow};
pub use metrics::{condition_labels, rmse, Condition, Thresholds};
pub use run::{run_experiment, run_on_dataset, MetricsReport, RunOutput};
