//! Experiment runner: problem construction, reference solutions, budgeted
//! solver runs and convergence traces.

pub mod config;
pub mod reference;
pub mod run;

pub use config::{
    learning_rate_grid, restart_interval_grid, Algorithm, LazyMode, ProblemSource, RunConfig, SmoothnessChoice,
};
pub use reference::{
    compute_reference, compute_reference_cached, load_reference, problem_hash, save_reference, ReferenceOptions,
    ReferenceSolution,
};
pub use run::{
    best_cell, evals_to_gap, evals_to_gap_last_iterate, format_trace, parse_trace, resolve, run_experiment,
    run_grid, run_resolved, write_trace, GridCell, ResolvedRun, RunOutcome, TraceRecord, TRACE_COLUMNS,
};
