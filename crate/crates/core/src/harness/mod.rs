//! Seeded experiment runner: environment by algorithm by sweep value by
//! replicate, with CSV and JSON outputs that are a pure function of the
//! configuration.

mod config;
mod output;
mod run;

pub use config::{
    default_sweep, log_grid, mix_seed, replicate_seeds, splitmix64, AlgorithmName, AlgorithmSpec,
    ExperimentConfig, ReplicateSeeds,
};
pub use output::{
    emit_outputs, parse_trace_csv, raw_csv, summary_json, trace_csv, trace_file_name, RAW_HEADER,
    TRACE_HEADER,
};
pub use run::{
    potential_bound, run_single, run_single_recorded, run_sweep, Aggregate, PotentialAudit,
    RegretTrace, ReplicateFailure, SweepCell, SweepSummary,
};
