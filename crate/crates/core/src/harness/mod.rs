//! Experiment orchestration: configuration, runs with CSV output,
//! convergence matrices, decay-rate fits and the linear spectral check.

mod config;
mod run;
mod study;

pub use config::{
    ensure_writable, parse_config, CliArgs, FileConfig, OutputOptions, RunConfig, DEFAULT_DIM, DEFAULT_POWER,
    DEFAULT_RECORDS, DEFAULT_SNAPSHOTS,
};
pub use run::{run_experiment, Headline, RunStatus, RunSummary, SUMMARY_FILE, TIMESERIES_FILE};
pub use study::{
    convergence_study, fit_decay_rate, linear_constancy_check, linear_constancy_report, ConstancyReport,
    ConvergenceReport, ConvergenceRow, DecayFit, MIN_CONSTANCY_TIMES, MIN_FIT_POINTS,
};
