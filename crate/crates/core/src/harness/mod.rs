//! Experiment orchestration: training grids, toy optimization problems,
//! hyperparameter sweeps and reports.

pub mod config;
mod grid;
mod output;
mod report;
mod sweep;
mod toy;

pub use config::{ExperimentConfig, ReportConfig, SweepConfig, ToyKind, ToyProblemConfig};
pub use grid::{
    build_eval_env, build_raw_env, build_train_env, preflight, rng_stream, run_grid, train_run, EnvName, EvalEnv,
    GridSummary, RunOutcome, RunStatus, TrainEnv, TrainRow, EVAL_HEADER, RUNS_HEADER, TRAIN_HEADER,
};
pub use output::{write_atomic, CsvTable};
pub use report::{
    build_report, read_runs_csv, report, Report, ReportInput, RunRow, AGGREGATE_HEADER, RUN_SUMMARY_HEADER,
};
pub use sweep::{cartesian, grid_iqm, run_sweep, SweepSummary};
pub use toy::{run_toy, toy_gradient, toy_table, ToyRow, TOY_HEADER};
