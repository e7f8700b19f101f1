//! Configuration, persistence and the error-versus-population sweep.

mod config;
mod persist;
mod sweep;

pub use config::{
    EnvConfig, EvalConfig, ExperimentConfig, OutputConfig, PolicyConfig, PolicyInit, SweepConfig, TabularConfig,
    TrainConfig,
};
pub use persist::{
    load_policy, read_sweep_csv, save_policy, write_metadata, write_summary_csv, write_sweep_csv, write_trace_csv,
    PolicyArtifact, RunMetadata, ARTIFACT_VERSION,
};
pub use sweep::{run_error_sweep, summarize, SweepOptions, SweepResultRow, SweepSummaryRow};
