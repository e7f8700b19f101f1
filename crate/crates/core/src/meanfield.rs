//! Infinite-population dynamics.
//!
//! Given a policy, the state distribution evolves deterministically
//! (`mu' = P_MF(mu, g, pi)`) while the global state stays random
//! (`g' ~ P_G(mu, g, nu_MF(mu, g, pi))`). Values are therefore expectations
//! over global-state paths only. [`exact_value_mfc`] enumerates those paths,
//! carrying the path probability and the distribution reached along each.

use rand::RngCore;
use rayon::prelude::*;

use crate::env::{validate_global, validate_mu, Environment, GlobalLaw, GlobalState};
use crate::error::{Error, Result};
use crate::estimate::{check_gamma, tail_bound, EvalOptions, ValueEstimate};
use crate::policy::Policy;
use crate::seeding::substream;
use crate::simplex::Simplex;

/// Paths below this probability are dropped during enumeration.
pub const PRUNE_PROBABILITY: f64 = 1e-15;
/// Default budget of enumerated global-state paths.
pub const DEFAULT_PATH_CAP: u64 = 1_000_000;

/// A (possibly time-varying) sequence of policies.
pub trait PolicySchedule: Sync {
    fn at(&self, t: usize) -> &dyn Policy;
}

/// The same policy at every step.
#[derive(Clone, Copy)]
pub struct Stationary<'a>(pub &'a dyn Policy);

impl PolicySchedule for Stationary<'_> {
    fn at(&self, _t: usize) -> &dyn Policy {
        self.0
    }
}

/// Explicit per-step policies; the last one repeats past the end.
#[derive(Clone, Copy)]
pub struct Sequence<'a>(pub &'a [&'a dyn Policy]);

impl PolicySchedule for Sequence<'_> {
    fn at(&self, t: usize) -> &dyn Policy {
        self.0[t.min(self.0.len() - 1)]
    }
}

/// Everything one mean-field step produces from `(mu, g)`.
#[derive(Debug, Clone)]
pub(crate) struct MfTransition {
    pub nu: Vec<f64>,
    pub next_mu: Vec<f64>,
    pub reward: f64,
}

pub(crate) fn transition(env: &dyn Environment, policy: &dyn Policy, mu: &[f64], g: GlobalState) -> MfTransition {
    let n_x = env.local_state_count();
    let n_u = env.action_count();
    let g_enc = env.encode_global(g);
    let probs: Vec<Vec<f64>> = (0..n_x).map(|x| policy.action_probs(x, mu, &g_enc)).collect();

    let mut nu = vec![0.0; n_u];
    for (x, px) in probs.iter().enumerate() {
        for (u, p) in px.iter().enumerate() {
            nu[u] += p * mu[x];
        }
    }

    let mut next_mu = vec![0.0; n_x];
    let mut reward = 0.0;
    for (x, px) in probs.iter().enumerate() {
        if mu[x] == 0.0 {
            continue;
        }
        for (u, p) in px.iter().enumerate() {
            let w = p * mu[x];
            if w == 0.0 {
                continue;
            }
            reward += w * env.reward(x, u, mu, g, &nu);
            for (y, q) in env.local_transition(x, u, mu, g, &nu).iter().enumerate() {
                next_mu[y] += w * q;
            }
        }
    }
    MfTransition {
        nu,
        next_mu,
        reward,
    }
}

fn check_inputs(env: &dyn Environment, policy: &dyn Policy, mu: &Simplex, g: GlobalState) -> Result<()> {
    validate_mu(env, mu.as_slice())?;
    validate_global(env, g)?;
    if policy.action_count() != env.action_count() {
        return Err(Error::arg(format!(
            "policy has {} actions, environment has {}",
            policy.action_count(),
            env.action_count()
        )));
    }
    Ok(())
}

/// Population action distribution `sum_x pi(x, mu, g) mu(x)`.
pub fn nu_mf(env: &dyn Environment, policy: &dyn Policy, mu: &Simplex, g: GlobalState) -> Result<Simplex> {
    check_inputs(env, policy, mu, g)?;
    let g_enc = env.encode_global(g);
    let mut nu = vec![0.0; env.action_count()];
    for (x, &m) in mu.as_slice().iter().enumerate() {
        for (u, p) in policy.action_probs(x, mu.as_slice(), &g_enc).iter().enumerate() {
            nu[u] += p * m;
        }
    }
    Ok(Simplex::from_convex(nu))
}

/// Next state distribution.
pub fn p_mf(env: &dyn Environment, policy: &dyn Policy, mu: &Simplex, g: GlobalState) -> Result<Simplex> {
    check_inputs(env, policy, mu, g)?;
    Ok(Simplex::from_convex(transition(env, policy, mu.as_slice(), g).next_mu))
}

/// Law of the next global state.
pub fn pg_mf(env: &dyn Environment, policy: &dyn Policy, mu: &Simplex, g: GlobalState) -> Result<GlobalLaw> {
    check_inputs(env, policy, mu, g)?;
    let nu = nu_mf(env, policy, mu, g)?;
    env.global_transition(mu.as_slice(), g, nu.as_slice())
}

/// Population-average reward.
pub fn r_mf(env: &dyn Environment, policy: &dyn Policy, mu: &Simplex, g: GlobalState) -> Result<f64> {
    check_inputs(env, policy, mu, g)?;
    Ok(transition(env, policy, mu.as_slice(), g).reward)
}

/// One point of a mean-field trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct MfcPoint {
    pub mu: Simplex,
    pub g: GlobalState,
    pub reward: f64,
}

/// Samples one global-state chain and the distributions it induces.
pub fn rollout_mfc(
    env: &dyn Environment,
    policy: &dyn Policy,
    mu0: &Simplex,
    g0: GlobalState,
    horizon: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<MfcPoint>> {
    check_inputs(env, policy, mu0, g0)?;
    rollout_schedule(env, &Stationary(policy), mu0, g0, horizon, rng)
}

pub fn rollout_schedule(
    env: &dyn Environment,
    schedule: &dyn PolicySchedule,
    mu0: &Simplex,
    g0: GlobalState,
    horizon: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<MfcPoint>> {
    let mut mu = mu0.as_slice().to_vec();
    let mut g = g0;
    let mut out = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let step = transition(env, schedule.at(t), &mu, g);
        if !step.reward.is_finite() {
            return Err(Error::Numeric(format!("mean-field reward at t={t} is {}", step.reward)));
        }
        out.push(MfcPoint {
            mu: Simplex::from_convex(mu.clone()),
            g,
            reward: step.reward,
        });
        if t + 1 < horizon {
            g = env.sample_global_transition(&mu, g, &step.nu, rng)?;
        }
        mu = step.next_mu;
    }
    Ok(out)
}

fn discounted(points: &[MfcPoint], gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut d = 1.0;
    for p in points {
        total += d * p.reward;
        d *= gamma;
    }
    total
}

/// Monte-Carlo estimate of the mean-field value.
///
/// A deterministic global chain needs a single rollout and reports a zero
/// standard error.
pub fn estimate_value_mfc_mc(
    env: &dyn Environment,
    policy: &dyn Policy,
    mu0: &Simplex,
    g0: GlobalState,
    opts: &EvalOptions,
) -> Result<ValueEstimate> {
    opts.validate()?;
    check_inputs(env, policy, mu0, g0)?;
    let rollouts = if env.global_is_deterministic() { 1 } else { opts.rollouts };
    let returns = (0..rollouts)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(opts.seed, "mfc-rollout", &[k as u64]);
            rollout_mfc(env, policy, mu0, g0, opts.horizon, &mut rng).map(|pts| discounted(&pts, opts.gamma))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ValueEstimate::from_returns(
        &returns,
        opts.horizon,
        tail_bound(env.reward_bound(), opts.gamma, opts.horizon),
    ))
}

/// Result of an exact path enumeration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactValue {
    pub value: f64,
    /// Probability mass of the pruned paths.
    pub dropped_mass: f64,
    /// Number of enumerated nodes.
    pub nodes: u64,
    pub tail_bound: f64,
}

/// Depth-first walk over global-state paths of length `depth`. `visit`
/// receives `(t, path probability, mean-field reward at (mu_t, g_t))`.
fn enumerate_paths(
    env: &dyn Environment,
    schedule: &dyn PolicySchedule,
    mu0: &[f64],
    g0: GlobalState,
    depth: usize,
    cap: u64,
    visit: &mut dyn FnMut(usize, f64, f64),
) -> Result<(f64, u64)> {
    if depth == 0 {
        return Ok((0.0, 0));
    }
    let branching = env.global_branching();
    if branching == usize::MAX {
        return Err(Error::Capability(
            "exact enumeration needs a finite or deterministic global kernel".into(),
        ));
    }
    let required = (branching as f64).powi(depth as i32 - 1);
    if required > cap as f64 {
        return Err(Error::Capacity { required, cap });
    }

    struct Walk<'a> {
        env: &'a dyn Environment,
        schedule: &'a dyn PolicySchedule,
        depth: usize,
        dropped: f64,
        nodes: u64,
    }

    fn descend(
        w: &mut Walk<'_>,
        visit: &mut dyn FnMut(usize, f64, f64),
        t: usize,
        mu: &[f64],
        g: GlobalState,
        prob: f64,
    ) -> Result<()> {
        w.nodes += 1;
        let step = transition(w.env, w.schedule.at(t), mu, g);
        visit(t, prob, step.reward);
        if t + 1 == w.depth {
            return Ok(());
        }
        let law = w.env.global_transition(mu, g, &step.nu)?;
        for (next_g, p) in law.iter() {
            let q = prob * p;
            if q < PRUNE_PROBABILITY {
                w.dropped += q;
                continue;
            }
            descend(w, visit, t + 1, &step.next_mu, next_g, q)?;
        }
        Ok(())
    }

    let mut walk = Walk {
        env,
        schedule,
        depth,
        dropped: 0.0,
        nodes: 0,
    };
    descend(&mut walk, visit, 0, mu0, g0, 1.0)?;
    Ok((walk.dropped, walk.nodes))
}

/// Exact truncated mean-field value by enumerating global-state paths.
///
/// Fails with [`Error::Capacity`] when `|G|^(horizon - 1)` exceeds `cap`.
pub fn exact_value_mfc(
    env: &dyn Environment,
    policy: &dyn Policy,
    mu0: &Simplex,
    g0: GlobalState,
    gamma: f64,
    horizon: usize,
    cap: u64,
) -> Result<ExactValue> {
    check_gamma(gamma)?;
    check_inputs(env, policy, mu0, g0)?;
    exact_value_schedule(env, &Stationary(policy), mu0, g0, gamma, horizon, cap)
}

pub fn exact_value_schedule(
    env: &dyn Environment,
    schedule: &dyn PolicySchedule,
    mu0: &Simplex,
    g0: GlobalState,
    gamma: f64,
    horizon: usize,
    cap: u64,
) -> Result<ExactValue> {
    let mut value = 0.0;
    let mut visit = |t: usize, prob: f64, r: f64| value += gamma.powi(t as i32) * prob * r;
    let (dropped_mass, nodes) = enumerate_paths(env, schedule, mu0.as_slice(), g0, horizon, cap, &mut visit)?;
    if !value.is_finite() {
        return Err(Error::Numeric(format!("exact value is {value}")));
    }
    Ok(ExactValue {
        value,
        dropped_mass,
        nodes,
        tail_bound: tail_bound(env.reward_bound(), gamma, horizon),
    })
}

/// Expected mean-field reward `steps` steps ahead of `(mu, g)`, i.e. the
/// reward of the composed dynamics averaged over all global paths.
pub fn composed_reward(
    env: &dyn Environment,
    schedule: &dyn PolicySchedule,
    mu: &Simplex,
    g: GlobalState,
    steps: usize,
    cap: u64,
) -> Result<f64> {
    let mut acc = 0.0;
    let mut visit = |t: usize, prob: f64, r: f64| {
        if t == steps {
            acc += prob * r;
        }
    };
    enumerate_paths(env, schedule, mu.as_slice(), g, steps + 1, cap, &mut visit)?;
    Ok(acc)
}
