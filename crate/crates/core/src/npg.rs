//! Natural policy gradient on the mean-field MDP.
//!
//! The representative agent sees `(x, mu, g)`; `mu` follows the deterministic
//! mean-field map and `g` the global kernel driven by `nu_MF`. Each outer
//! iteration fits the compatible regression `w . grad log pi ~ A / (1 - gamma)`
//! by averaged SGD on samples from the discounted occupancy measure, then moves
//! the parameters by `eta * w` and clips them to the weight cap.

use std::fmt;
use std::time::Instant;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::env::{validate_global, validate_mu, Environment, GlobalState};
use crate::error::{Error, Result};
use crate::estimate::{check_gamma, EvalOptions, ValueEstimate};
use crate::meanfield::{estimate_value_mfc_mc, transition};
use crate::policy::{Policy, PolicyParams};
use crate::seeding::{child_seed, sample_categorical, substream};
use crate::simplex::Simplex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NpgConfig {
    /// Outer step size.
    pub eta: f64,
    /// Inner SGD step size.
    pub alpha: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub gamma: f64,
    pub master_seed: u64,
    /// Longest geometric rollout before a sample is flagged as truncated.
    pub horizon_cap: usize,
    /// Horizon of the per-iteration value estimate.
    pub eval_horizon: usize,
    /// Rollouts of the per-iteration value estimate.
    pub eval_rollouts: usize,
}

impl Default for NpgConfig {
    fn default() -> Self {
        NpgConfig {
            eta: 0.15,
            alpha: 0.005,
            outer_iters: 50,
            inner_iters: 500,
            gamma: 0.9,
            master_seed: 0,
            horizon_cap: 10_000,
            eval_horizon: 200,
            eval_rollouts: 100,
        }
    }
}

impl NpgConfig {
    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        for (name, v) in [("eta", self.eta), ("alpha", self.alpha)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(name, format!("must be finite and non-negative, got {v}")));
            }
        }
        if self.alpha == 0.0 {
            return Err(Error::config("alpha", "must be positive"));
        }
        for (name, v) in [
            ("outer_iters", self.outer_iters),
            ("inner_iters", self.inner_iters),
            ("horizon_cap", self.horizon_cap),
            ("eval_horizon", self.eval_horizon),
            ("eval_rollouts", self.eval_rollouts),
        ] {
            if v == 0 {
                return Err(Error::config(name, "must be at least 1"));
            }
        }
        Ok(())
    }
}

/// A draw `(x, mu, g, u)` from the occupancy measure with an advantage estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancySample {
    pub x: usize,
    pub mu: Simplex,
    pub g: GlobalState,
    pub u: usize,
    pub advantage: f64,
    /// Stopping time of the acceptance rollout.
    pub t: usize,
    /// True when either rollout hit the horizon cap.
    pub truncated: bool,
}

/// Current state of the representative agent together with the population
/// quantities derived from `(mu, g)`.
struct Walker<'a> {
    env: &'a dyn Environment,
    policy: &'a PolicyParams,
    x: usize,
    u: usize,
    mu: Vec<f64>,
    g: GlobalState,
    nu: Vec<f64>,
    next_mu: Vec<f64>,
}

impl<'a> Walker<'a> {
    fn start(env: &'a dyn Environment, policy: &'a PolicyParams, x: usize, mu: Vec<f64>, g: GlobalState, rng: &mut dyn RngCore) -> Self {
        let step = transition(env, policy, &mu, g);
        let mut w = Walker {
            env,
            policy,
            x,
            u: 0,
            mu,
            g,
            nu: step.nu,
            next_mu: step.next_mu,
        };
        w.resample_action(rng);
        w
    }

    fn resample_action(&mut self, rng: &mut dyn RngCore) {
        let probs = self.policy.action_probs(self.x, &self.mu, &self.env.encode_global(self.g));
        self.u = sample_categorical(&probs, rng);
    }

    fn reward(&self) -> f64 {
        self.env.reward(self.x, self.u, &self.mu, self.g, &self.nu)
    }

    fn update(&mut self, rng: &mut dyn RngCore) -> Result<()> {
        let x = self.env.sample_local_transition(self.x, self.u, &self.mu, self.g, &self.nu, rng);
        let g = self.env.sample_global_transition(&self.mu, self.g, &self.nu, rng)?;
        let mu = std::mem::take(&mut self.next_mu);
        let step = transition(self.env, self.policy, &mu, g);
        self.x = x;
        self.g = g;
        self.mu = mu;
        self.nu = step.nu;
        self.next_mu = step.next_mu;
        self.resample_action(rng);
        Ok(())
    }

    /// Runs `update` until a `1 - gamma` coin stops it. Calls `each` after
    /// every update and returns whether the cap cut the rollout short.
    fn geometric(
        &mut self,
        gamma: f64,
        cap: usize,
        rng: &mut dyn RngCore,
        mut each: impl FnMut(&Self),
    ) -> Result<(usize, bool)> {
        let mut t = 0;
        loop {
            if rng.random::<f64>() >= gamma {
                return Ok((t, false));
            }
            if t == cap {
                return Ok((t, true));
            }
            self.update(rng)?;
            each(self);
            t += 1;
        }
    }
}

fn check_inputs(env: &dyn Environment, phi: &PolicyParams, mu0: &Simplex, g0: GlobalState, gamma: f64) -> Result<()> {
    check_gamma(gamma)?;
    validate_mu(env, mu0.as_slice())?;
    validate_global(env, g0)?;
    phi.check_env(env)
}

/// Undiscounted reward sum along a geometric-length continuation that
/// starts with the current `(x, u)`.
fn continuation_sum(w: &mut Walker<'_>, gamma: f64, cap: usize, rng: &mut dyn RngCore) -> Result<(f64, bool)> {
    let mut sum = w.reward();
    let (_, truncated) = w.geometric(gamma, cap, rng, |s| sum += s.reward())?;
    Ok((sum, truncated))
}

/// Draws one occupancy sample and its unbiased advantage estimate.
///
/// `x_0 ~ mu0`, then a `Geometric(1 - gamma)` number of updates (possibly
/// zero) selects the sample. A fair coin then decides whether the reward
/// continuation runs from the sampled action (`Q` branch, `A = 2 * sum`) or
/// from a freshly drawn action (`V` branch, `A = -2 * sum`).
pub fn sample_occupancy(
    env: &dyn Environment,
    phi: &PolicyParams,
    mu0: &Simplex,
    g0: GlobalState,
    gamma: f64,
    rng: &mut dyn RngCore,
    horizon_cap: usize,
) -> Result<OccupancySample> {
    check_inputs(env, phi, mu0, g0, gamma)?;
    let x0 = sample_categorical(mu0.as_slice(), rng);
    let mut w = Walker::start(env, phi, x0, mu0.as_slice().to_vec(), g0, rng);
    let (t, cut) = w.geometric(gamma, horizon_cap, rng, |_| {})?;
    let (x, u, mu, g) = (w.x, w.u, w.mu.clone(), w.g);
    let (advantage, cont_cut) = advantage_from(&mut w, gamma, horizon_cap, rng)?;
    Ok(OccupancySample {
        x,
        mu: Simplex::from_convex(mu),
        g,
        u,
        advantage,
        t,
        truncated: cut || cont_cut,
    })
}

fn advantage_from(w: &mut Walker<'_>, gamma: f64, cap: usize, rng: &mut dyn RngCore) -> Result<(f64, bool)> {
    let q_branch = rng.random::<f64>() < 0.5;
    if !q_branch {
        w.resample_action(rng);
    }
    let (sum, cut) = continuation_sum(w, gamma, cap, rng)?;
    let a = if q_branch { 2.0 * sum } else { -2.0 * sum };
    if !a.is_finite() {
        return Err(Error::Numeric(format!("advantage estimate is {a}")));
    }
    Ok((a, cut))
}

/// Advantage estimate at a fixed `(x, mu, g, u)`, using the same
/// continuation as [`sample_occupancy`].
#[allow(clippy::too_many_arguments)]
pub fn estimate_advantage_at(
    env: &dyn Environment,
    phi: &PolicyParams,
    x: usize,
    mu: &Simplex,
    g: GlobalState,
    u: usize,
    gamma: f64,
    rng: &mut dyn RngCore,
    horizon_cap: usize,
) -> Result<f64> {
    check_inputs(env, phi, mu, g, gamma)?;
    if x >= env.local_state_count() || u >= env.action_count() {
        return Err(Error::arg(format!("state-action ({x}, {u}) out of range")));
    }
    let mut w = Walker::start(env, phi, x, mu.as_slice().to_vec(), g, rng);
    w.u = u;
    Ok(advantage_from(&mut w, gamma, horizon_cap, rng)?.0)
}

/// Output of the inner regression.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdOutcome {
    /// Average of the iterates `w_1 .. w_L`.
    pub w: Vec<f64>,
    /// Samples whose rollouts hit the horizon cap.
    pub truncated: usize,
}

/// Averaged SGD on `(w . s - A / (1 - gamma))^2` with `s = grad log pi`,
/// starting from `w = 0` and drawing one occupancy sample per step.
#[allow(clippy::too_many_arguments)]
pub fn solve_w_sgd(
    env: &dyn Environment,
    phi: &PolicyParams,
    mu0: &Simplex,
    g0: GlobalState,
    alpha: f64,
    inner_iters: usize,
    gamma: f64,
    horizon_cap: usize,
    rng: &mut dyn RngCore,
) -> Result<SgdOutcome> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::arg(format!("alpha must be positive, got {alpha}")));
    }
    if inner_iters == 0 {
        return Err(Error::arg("inner_iters must be at least 1"));
    }
    let d = phi.dim();
    let mut w = vec![0.0; d];
    let mut sum = vec![0.0; d];
    let mut truncated = 0;
    for l in 0..inner_iters {
        let s = sample_occupancy(env, phi, mu0, g0, gamma, rng, horizon_cap)?;
        truncated += s.truncated as usize;
        let score = phi.log_prob_grad(s.x, s.mu.as_slice(), &env.encode_global(s.g), s.u)?;
        let fit = w.iter().zip(&score).map(|(a, b)| a * b).sum::<f64>() - s.advantage / (1.0 - gamma);
        for ((wi, si), acc) in w.iter_mut().zip(&score).zip(sum.iter_mut()) {
            *wi -= alpha * fit * si;
            *acc += *wi;
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("SGD iterate diverged at inner step {}", l + 1)));
        }
    }
    sum.iter_mut().for_each(|v| *v /= inner_iters as f64);
    Ok(SgdOutcome { w: sum, truncated })
}

/// One outer iteration of the trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    /// Index of the parameters `Phi_j`, starting at 1.
    pub j: usize,
    pub phi: Vec<f64>,
    /// Euclidean norm of the update direction that produced `Phi_j`.
    pub w_norm: f64,
    pub value: ValueEstimate,
    pub truncated: usize,
    /// Seconds spent on this iteration.
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub initial: PolicyParams,
    pub records: Vec<TrainingRecord>,
}

impl TrainingTrace {
    /// Parameters after the last completed iteration.
    pub fn final_policy(&self) -> PolicyParams {
        match self.records.last() {
            Some(r) => self.initial.with_theta(r.phi.clone()).expect("trace parameters are valid"),
            None => self.initial.clone(),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.value.mean).collect()
    }
}

/// A training run that stopped early, with everything completed before the
/// failure.
#[derive(Debug)]
pub struct NpgAbort {
    pub partial: TrainingTrace,
    pub error: Error,
}

impl fmt::Display for NpgAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "training stopped after {} iterations: {}", self.partial.records.len(), self.error)
    }
}

impl std::error::Error for NpgAbort {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Runs `outer_iters` NPG steps from `phi0`. Iteration `j` draws its samples
/// from the substream `(master_seed, j)`, so a longer run extends a shorter
/// one with the same seed.
pub fn npg_run(
    env: &dyn Environment,
    phi0: &PolicyParams,
    mu0: &Simplex,
    g0: GlobalState,
    config: &NpgConfig,
) -> Result<TrainingTrace, Box<NpgAbort>> {
    let mut trace = TrainingTrace {
        initial: phi0.clone(),
        records: Vec::with_capacity(config.outer_iters),
    };
    let checks = config
        .validate()
        .and_then(|_| check_inputs(env, phi0, mu0, g0, config.gamma))
        .and_then(|_| phi0.validate());
    if let Err(error) = checks {
        return Err(Box::new(NpgAbort { partial: trace, error }));
    }
    let mut phi = phi0.clip_weights();
    for j in 0..config.outer_iters {
        let start = Instant::now();
        let step = (|| {
            let mut rng = substream(config.master_seed, "npg-inner", &[j as u64]);
            let sgd = solve_w_sgd(
                env,
                &phi,
                mu0,
                g0,
                config.alpha,
                config.inner_iters,
                config.gamma,
                config.horizon_cap,
                &mut rng,
            )?;
            let next = phi.step(&sgd.w, config.eta)?;
            let opts = EvalOptions {
                gamma: config.gamma,
                horizon: config.eval_horizon,
                rollouts: config.eval_rollouts,
                seed: child_seed(config.master_seed, "npg-eval", &[j as u64]),
            };
            let value = estimate_value_mfc_mc(env, &next, mu0, g0, &opts)?;
            let w_norm = sgd.w.iter().map(|v| v * v).sum::<f64>().sqrt();
            Ok::<_, Error>((next, w_norm, value, sgd.truncated))
        })();
        match step {
            Ok((next, w_norm, value, truncated)) => {
                trace.records.push(TrainingRecord {
                    j: j + 1,
                    phi: next.theta().to_vec(),
                    w_norm,
                    value,
                    truncated,
                    elapsed: start.elapsed().as_secs_f64(),
                });
                phi = next;
            }
            Err(error) => return Err(Box::new(NpgAbort { partial: trace, error })),
        }
    }
    Ok(trace)
}
