//! Experiment orchestration: configs, trials, aggregation, validation and
//! result files.

pub mod config;
pub mod emit;
pub mod experiment;
pub mod trial;
pub mod validate;

pub use config::{DatasetSpec, ExperimentConfig};
pub use emit::{emit, Format, Manifest, Row};
pub use experiment::{run_experiment, run_experiment_with, AggregateResult, MetricSeries};
pub use trial::{run_trial, RoundRecord, TrialData, TrialResult};
pub use validate::{validate_closed_forms, Check, ValidationConfig, ValidationReport};
