//! Experiment driver: configuration, grid execution, and the tradeoff
//! report.

pub mod config;
pub mod runner;
pub mod tradeoff;

pub use config::{DatasetKind, ExperimentConfig, StrategyKind};
pub use runner::{
    cmd_evaluate, cmd_fit, evaluate_cell, ensure_solve, ingest, plan, run_experiment, EvalCell,
    Plan, RunContext, RunSummary, SolveKey,
};
pub use tradeoff::{
    parse_reports, tradeoff_table, write_tradeoff_csv, GridPoint, TradeoffOptions, TradeoffRow,
};
