//! Experiment orchestration: configuration, trials, metrics and artifacts.

pub mod config;
pub mod metrics;
pub mod output;
pub mod trial;

pub use config::{ArmKind, ArmSpec, ExperimentConfig, PriorConfig, ViSettings};
pub use metrics::{compute_auc, percentile_bands, sign_test, summarize_arm, ArmSummary, Bands, SignTest};
pub use output::{format_table, obtain_oracle, report, run_experiment, ExperimentOutput};
pub use trial::{run_trial, PosteriorRecord, QueryRecord, TrialResult, TrialRunner};
