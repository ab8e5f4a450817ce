//! Experiment configuration, runs over the A1 to A8 grid, and result files.

mod config;
mod experiment;
mod export;
mod float;

pub use config::{load_dataset, Base, BuiltTarget, ExperimentSpec, TargetSource};
pub use experiment::{
    analyze, family_name, lambda_checksum, marginal_curve, moment_table, run_experiment, run_grid,
    Analysis, GridResult, GridRow, MarginalCurve, MomentRow, OracleComparison, ResultBundle,
    Summary,
};
pub use export::{
    export_analysis, export_grid, export_results, read_summary, trace_csv, GRID_FILE,
    IMPORTANCE_FILE, LAMBDA_FILE, MARGINALS_FILE, MOMENTS_FILE, ORACLE_FILE, SUMMARY_FILE,
    TIMING_FILE, TRACE_FILE,
};
