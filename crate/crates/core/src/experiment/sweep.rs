use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::env::{Environment, GlobalState};
use crate::error::{Error, Result};
use crate::meanfield::{estimate_value_mfc_mc, exact_value_mfc};
use crate::nagent::{empirical_state_dist, estimate_value_nagent, sample_initial_locals};
use crate::policy::Policy;
use crate::seeding::{child_seed, substream};
use crate::simplex::Simplex;

/// One `(N, seed)` cell of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResultRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: usize,
    pub v_n_mean: f64,
    pub v_n_stderr: f64,
    pub v_inf: f64,
    pub error: f64,
    /// Seconds spent on the cell, or 0 when timing is off.
    pub wall_time: f64,
}

/// Mean and standard deviation of the error over seeds for one `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummaryRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub seeds: usize,
    pub mean_error: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SweepOptions {
    /// Record per-cell wall time. Off by default so outputs are reproducible
    /// byte for byte.
    pub timing: bool,
}

/// Mean-field value from `(mu, g0)`: exact when the global chain can be
/// enumerated within the configured budget, Monte Carlo otherwise.
fn mean_field_value(
    cfg: &ExperimentConfig,
    env: &dyn Environment,
    policy: &dyn Policy,
    mu: &Simplex,
    g0: GlobalState,
    seed: u64,
) -> Result<f64> {
    match exact_value_mfc(env, policy, mu, g0, cfg.eval.gamma, cfg.horizon(), cfg.eval.exact_cap) {
        Ok(v) => Ok(v.value),
        Err(Error::Capacity { .. } | Error::Capability(_)) => {
            Ok(estimate_value_mfc_mc(env, policy, mu, g0, &cfg.eval_options(seed))?.mean)
        }
        Err(e) => Err(e),
    }
}

/// Error `|V_N - V_inf|` for every `(N, seed)` cell.
///
/// Each cell draws `N` initial local states i.i.d. from `mu0`, estimates the
/// N-agent value from them by rollouts and compares it with the mean-field
/// value of their empirical distribution. Cells run on the current rayon
/// pool with substreams keyed by `(master_seed, N, seed)`; rows come back
/// ordered by `N`, then seed.
pub fn run_error_sweep(
    cfg: &ExperimentConfig,
    env: &dyn Environment,
    policy: &dyn Policy,
    opts: SweepOptions,
) -> Result<Vec<SweepResultRow>> {
    let mu0 = cfg.mu0(env)?;
    let g0 = cfg.g0(env)?;
    let master = cfg.master_seed;
    let cells: Vec<(usize, usize)> = cfg
        .sweep
        .n_grid
        .iter()
        .flat_map(|&n| (0..cfg.sweep.seeds).map(move |s| (n, s)))
        .collect();
    cells
        .into_par_iter()
        .map(|(n, s)| {
            let start = Instant::now();
            let key = [n as u64, s as u64];
            let mut rng = substream(master, "sweep-init", &key);
            let locals = sample_initial_locals(&mu0, n, &mut rng);
            let mu_n = empirical_state_dist(&locals, env.local_state_count())?.to_simplex();
            let v_n = estimate_value_nagent(env, policy, &locals, g0, &cfg.eval_options(child_seed(master, "sweep-vn", &key)))?;
            let v_inf = mean_field_value(cfg, env, policy, &mu_n, g0, child_seed(master, "sweep-vinf", &key))?;
            Ok(SweepResultRow {
                n,
                seed: s,
                v_n_mean: v_n.mean,
                v_n_stderr: v_n.stderr,
                v_inf,
                error: (v_n.mean - v_inf).abs(),
                wall_time: if opts.timing { start.elapsed().as_secs_f64() } else { 0.0 },
            })
        })
        .collect()
}

/// Per-`N` mean and sample standard deviation of the error, in grid order.
pub fn summarize(rows: &[SweepResultRow]) -> Vec<SweepSummaryRow> {
    let mut order: Vec<usize> = Vec::new();
    for r in rows {
        if !order.contains(&r.n) {
            order.push(r.n);
        }
    }
    order
        .into_iter()
        .map(|n| {
            let errs: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.error).collect();
            let k = errs.len() as f64;
            let mean = errs.iter().sum::<f64>() / k;
            let std = if errs.len() > 1 {
                (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
            } else {
                0.0
            };
            SweepSummaryRow {
                n,
                seeds: errs.len(),
                mean_error: mean,
                std_error: std,
            }
        })
        .collect()
}
