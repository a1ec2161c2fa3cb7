//! Experiment harness: configuration parsing with overrides, seeded
//! multi-run execution over a worker pool, regret traces and summaries,
//! stopping-time Monte-Carlo, regret-bound diagnostics, sensor-data
//! ingestion, and CSV emission. Everything here is f64; the model core
//! underneath stays generic.

mod bound;
mod config;
mod ingest;
mod output;
mod presets;
mod run;

pub use bound::{
    bound_rhs, c1_constant, evaluate_bound, info_gain_largest_block, phi, w_bar_tau, BoundReport,
    BoundRow,
};
pub use config::{
    apply_override, BetaConfig, BoundConfig, DomainConfig, ExperimentConfig, KernelConfig,
    NoiseConfig, ObjectiveConfig, PolicyConfig, PolicyKind, SchedulePoint, Seeds,
};
pub use ingest::{
    ingest_arms_csv, ingest_arms_reader, write_covariance_csv, ArmsReplayDataset,
    ARMS_CSV_HEADER,
};
pub use output::{
    fmt_sig9, round_sig9, write_bound_csv, write_bound_meta_csv, write_stopping_csv,
    write_stopping_stats_csv, write_summary_csv, write_trace_csv, SummaryRow, TraceRow,
    BOUND_HEADER, BOUND_META_HEADER, STOPPING_HEADER, STOPPING_STATS_HEADER, SUMMARY_HEADER,
    TRACE_HEADER,
};
pub use presets::{preset, preset_names, preset_toml};
pub use run::{
    noise_stream, run_experiment, stopping_times, RunOutput, StoppingReport, StoppingRun,
};
