//! Experiment orchestration: configuration, run-directory stages, metrics,
//! reports and the command-line front end.

pub mod cli;
pub mod config;
pub mod metrics;
pub mod report;
pub mod stages;

pub use config::{ExperimentConfig, ExperimentKind, TrainingSettings};
pub use report::{CaseResult, EvaluationReport, ForecastResult, PodResult, Table};
pub use stages::{run, run_avg_forecast, run_fft_mlp, run_pod_lstm, RunDir};
