//! Experiment orchestration and report output.

pub mod config;
pub mod experiment;
pub mod report;

pub use config::{CodebookSettings, ExperimentConfig, LinkSetup, PredictorConfig, PredictorKind};
pub use experiment::{
    aggregate, allocate_all, build_predictor, generate_dataset, mean_var, realized_throughput, run_mobility_experiment,
    run_mobility_with, run_static_experiment, run_static_with, summarize_mobility, train_on, Aggregate, BuiltPredictor,
    ExperimentReport, MobilityRecord, MobilitySummary, RunRecord,
};
pub use report::{read_runs_csv, runs_csv, write_report, CSV_SCHEMA_VERSION};
