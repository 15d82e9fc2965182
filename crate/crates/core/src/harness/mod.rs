//! Experiment harness: configuration, the class-incremental protocol
//! runner, seed sweeps, and report emission.
//!
//! The protocol: tasks arrive in order, each exposing only its own classes'
//! training samples (replay methods additionally see their buffer), every
//! sample is seen once unless configured otherwise, and evaluation is the
//! final accuracy over the full test set with no task identity.

mod config;
mod report;
mod runner;

pub use config::{
    parse_split, ArchOverrides, BalancingMode, BudgetMode, DatasetChoice, ExperimentConfig,
    ImbalanceSpec, Method, SyntheticSpec,
};
pub use report::{
    emit_report, emit_sweep, final_average_accuracy, run_to_csv, RunReport, SweepReport,
    CSV_HEADER,
};
pub use runner::{locate_data_dir, run_experiment, run_gp_check, run_seed_sweep};

#[cfg(test)]
mod tests;
