use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Monte-Carlo estimate of a discounted value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub mean: f64,
    /// Sample standard deviation over rollouts divided by `sqrt(rollouts)`.
    pub stderr: f64,
    pub rollouts: usize,
    pub horizon: usize,
    /// `M * gamma^horizon / (1 - gamma)`, the worst-case truncated tail.
    pub tail_bound: f64,
}

impl ValueEstimate {
    /// Aggregates per-rollout returns in index order.
    pub fn from_returns(returns: &[f64], horizon: usize, tail_bound: f64) -> Self {
        let n = returns.len();
        let mean = returns.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        ValueEstimate {
            mean,
            stderr,
            rollouts: n,
            horizon,
            tail_bound,
        }
    }
}

/// Settings shared by the rollout-based value estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub gamma: f64,
    pub horizon: usize,
    pub rollouts: usize,
    /// Master seed; rollout `k` uses the substream `(seed, k)`.
    pub seed: u64,
}

impl EvalOptions {
    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        if self.horizon == 0 {
            return Err(Error::arg("horizon must be at least 1"));
        }
        if self.rollouts == 0 {
            return Err(Error::arg("rollouts must be at least 1"));
        }
        Ok(())
    }
}

pub fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::arg(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    Ok(())
}

pub fn tail_bound(reward_bound: f64, gamma: f64, horizon: usize) -> f64 {
    reward_bound * gamma.powi(horizon as i32) / (1.0 - gamma)
}

/// Smallest horizon whose truncated tail is below `1e-3 * M`.
pub fn default_horizon(gamma: f64) -> usize {
    let mut h = 1usize;
    while gamma.powi(h as i32) / (1.0 - gamma) >= 1e-3 {
        h += 1;
    }
    h
}
