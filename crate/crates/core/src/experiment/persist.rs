use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EnvConfig, SweepResultRow, SweepSummaryRow};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::npg::TrainingTrace;
use crate::policy::PolicyParams;

/// Format version of persisted policies and metadata.
pub const ARTIFACT_VERSION: u32 = 1;

/// Sidecar record that pins down how an output file was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub artifact_version: u32,
    pub crate_version: String,
    pub command: String,
    /// SHA-256 of the resolved configuration.
    pub config_digest: String,
    pub master_seed: u64,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyArtifact {
    pub version: u32,
    pub env: EnvConfig,
    pub params: PolicyParams,
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepResultRow]) -> Result<()> {
    write_csv(path, rows)
}

pub fn write_summary_csv(path: &Path, rows: &[SweepSummaryRow]) -> Result<()> {
    write_csv(path, rows)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<SweepResultRow>, _>>()?;
    Ok(rows)
}

#[derive(Serialize)]
struct TraceRow {
    j: usize,
    value_mean: f64,
    value_stderr: f64,
    w_norm: f64,
    wall_time: f64,
}

/// One line per outer iteration. Wall time is written as 0 unless `timing`.
pub fn write_trace_csv(path: &Path, trace: &TrainingTrace, timing: bool) -> Result<()> {
    let rows: Vec<TraceRow> = trace
        .records
        .iter()
        .map(|r| TraceRow {
            j: r.j,
            value_mean: r.value.mean,
            value_stderr: r.value.stderr,
            w_norm: r.w_norm,
            wall_time: if timing { r.elapsed } else { 0.0 },
        })
        .collect();
    write_csv(path, &rows)
}

pub fn write_metadata(path: &Path, meta: &RunMetadata) -> Result<()> {
    write_json(path, meta)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn save_policy(path: &Path, artifact: &PolicyArtifact) -> Result<()> {
    write_json(path, artifact)
}

/// Reads a policy artifact and checks it against `env`.
pub fn load_policy(path: &Path, env: &dyn Environment) -> Result<PolicyArtifact> {
    let file = File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let artifact: PolicyArtifact = serde_json::from_reader(std::io::BufReader::new(file))?;
    if artifact.version != ARTIFACT_VERSION {
        return Err(Error::invalid(format!(
            "policy artifact version {} is not supported (expected {ARTIFACT_VERSION})",
            artifact.version
        )));
    }
    artifact.params.validate()?;
    artifact.params.check_env(env)?;
    Ok(artifact)
}
