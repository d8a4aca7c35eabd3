//! Experiment orchestration: configuration, the round loop, metrics files,
//! selection traces, and sweeps.

pub mod config;
pub mod metrics;
pub mod run;

pub use config::{
    DatasetKind, ExperimentConfig, ModelStyle, Participation, PartitionKind, Strategy, CONFIG_KEYS,
};
pub use metrics::{mean_std, trailing_mean_accuracy, write_metrics_csv, METRICS_HEADER};
pub use run::{
    init_round_state, load_datasets, run_experiment, run_round, run_seed, run_sweep, select_trace,
    ExperimentReport, RoundState, SeedRun, SelectionTrace, SweepCell, SUMMARY_WINDOW,
};
