//! Macro-replication experiments: configuration, execution, CSV reports.

pub mod config;
pub mod report;
pub mod run;

pub use config::{ExperimentConfig, PlanStep, Procedure, TruthSpec};
pub use report::{emit_csv, to_csv_string, write_csv};
pub use run::{
    resolve_truth, run_macro, run_macro_with, run_replication, score_cd, single_pass, with_threads, ExperimentReport,
    FeasibleSummary, MacroOutcome, MeanSe,
};
