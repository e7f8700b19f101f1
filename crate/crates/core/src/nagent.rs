//! Finite population of `N` agents sharing a global state.

use rand::RngCore;
use rayon::prelude::*;

use crate::env::{validate_global, Environment, GlobalState};
use crate::error::{Error, Result};
use crate::estimate::{tail_bound, EvalOptions, ValueEstimate};
use crate::policy::Policy;
use crate::seeding::{sample_categorical, substream};
use crate::simplex::Simplex;

/// Counts over a finite set, normalised by the population size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmpiricalDistribution {
    counts: Vec<usize>,
    n: usize,
}

impl EmpiricalDistribution {
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn denominator(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn to_simplex(&self) -> Simplex {
        Simplex::from_convex(self.weights())
    }
}

fn empirical(indices: &[usize], size: usize, what: &str) -> Result<EmpiricalDistribution> {
    if indices.is_empty() {
        return Err(Error::arg(format!("empirical {what} distribution of an empty population")));
    }
    let mut counts = vec![0usize; size];
    for &i in indices {
        if i >= size {
            return Err(Error::arg(format!("{what} index {i} outside 0..{size}")));
        }
        counts[i] += 1;
    }
    Ok(EmpiricalDistribution {
        counts,
        n: indices.len(),
    })
}

pub fn empirical_state_dist(locals: &[usize], state_count: usize) -> Result<EmpiricalDistribution> {
    empirical(locals, state_count, "state")
}

pub fn empirical_action_dist(actions: &[usize], action_count: usize) -> Result<EmpiricalDistribution> {
    empirical(actions, action_count, "action")
}

/// Joint state of the population.
#[derive(Debug, Clone, PartialEq)]
pub struct NAgentState {
    pub locals: Vec<usize>,
    pub global: GlobalState,
    pub t: usize,
}

impl NAgentState {
    pub fn new(locals: Vec<usize>, global: GlobalState) -> Self {
        NAgentState { locals, global, t: 0 }
    }

    pub fn validate(&self, env: &dyn Environment) -> Result<()> {
        if self.locals.is_empty() {
            return Err(Error::arg("population must have at least one agent"));
        }
        let n_x = env.local_state_count();
        if let Some(x) = self.locals.iter().find(|&&x| x >= n_x) {
            return Err(Error::arg(format!("local state {x} outside 0..{n_x}")));
        }
        validate_global(env, self.global)
    }
}

/// Draws `n` local states i.i.d. from `mu0`.
pub fn sample_initial_locals(mu0: &Simplex, n: usize, rng: &mut dyn RngCore) -> Vec<usize> {
    (0..n).map(|_| sample_categorical(mu0.as_slice(), rng)).collect()
}

fn check_policy(env: &dyn Environment, policy: &dyn Policy) -> Result<()> {
    if policy.action_count() != env.action_count() {
        return Err(Error::arg(format!(
            "policy has {} actions, environment has {}",
            policy.action_count(),
            env.action_count()
        )));
    }
    Ok(())
}

/// One synchronous step. Assumes `state` is valid for `env`.
fn advance(
    env: &dyn Environment,
    policy: &dyn Policy,
    state: &NAgentState,
    rng: &mut dyn RngCore,
) -> (NAgentState, f64) {
    let n_x = env.local_state_count();
    let n_u = env.action_count();
    let n = state.locals.len();

    let mut counts = vec![0usize; n_x];
    state.locals.iter().for_each(|&x| counts[x] += 1);
    let mu: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let g = state.global;
    let g_enc = env.encode_global(g);

    // only |X| distinct decision rules are needed per step
    let probs: Vec<Option<Vec<f64>>> = (0..n_x)
        .map(|x| (counts[x] > 0).then(|| policy.action_probs(x, &mu, &g_enc)))
        .collect();
    let actions: Vec<usize> = state
        .locals
        .iter()
        .map(|&x| sample_categorical(probs[x].as_deref().expect("occupied state"), rng))
        .collect();
    let mut action_counts = vec![0usize; n_u];
    actions.iter().for_each(|&u| action_counts[u] += 1);
    let nu: Vec<f64> = action_counts.iter().map(|&c| c as f64 / n as f64).collect();

    let reward = state
        .locals
        .iter()
        .zip(&actions)
        .map(|(&x, &u)| env.reward(x, u, &mu, g, &nu))
        .sum::<f64>()
        / n as f64;
    let locals = state
        .locals
        .iter()
        .zip(&actions)
        .map(|(&x, &u)| env.sample_local_transition(x, u, &mu, g, &nu, rng))
        .collect();
    let global = env
        .sample_global_transition(&mu, g, &nu, rng)
        .expect("global sampling is infallible for validated environments");
    (
        NAgentState {
            locals,
            global,
            t: state.t + 1,
        },
        reward,
    )
}

/// Samples every agent's action and next state and the next global state.
/// Returns the population-averaged reward of the current step.
pub fn step_nagent(
    env: &dyn Environment,
    policy: &dyn Policy,
    state: &NAgentState,
    rng: &mut dyn RngCore,
) -> Result<(NAgentState, f64)> {
    state.validate(env)?;
    check_policy(env, policy)?;
    Ok(advance(env, policy, state, rng))
}

/// Discounted return of one rollout truncated at `horizon`.
pub fn rollout_return(
    env: &dyn Environment,
    policy: &dyn Policy,
    initial: &NAgentState,
    gamma: f64,
    horizon: usize,
    rng: &mut dyn RngCore,
) -> f64 {
    let mut state = initial.clone();
    let mut total = 0.0;
    let mut discount = 1.0;
    for _ in 0..horizon {
        let (next, r) = advance(env, policy, &state, rng);
        total += discount * r;
        discount *= gamma;
        state = next;
    }
    total
}

/// Monte-Carlo estimate of the N-agent value from a fixed initial condition.
///
/// Rollouts run in parallel on the current rayon pool; rollout `k` draws from
/// the substream `(opts.seed, k)`, so the estimate does not depend on the
/// number of workers.
pub fn estimate_value_nagent(
    env: &dyn Environment,
    policy: &dyn Policy,
    initial_locals: &[usize],
    initial_global: GlobalState,
    opts: &EvalOptions,
) -> Result<ValueEstimate> {
    opts.validate()?;
    let initial = NAgentState::new(initial_locals.to_vec(), initial_global);
    initial.validate(env)?;
    check_policy(env, policy)?;
    let returns: Vec<f64> = (0..opts.rollouts)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(opts.seed, "nagent-rollout", &[k as u64]);
            rollout_return(env, policy, &initial, opts.gamma, opts.horizon, &mut rng)
        })
        .collect();
    if let Some(r) = returns.iter().find(|r| !r.is_finite()) {
        return Err(Error::Numeric(format!("rollout return {r}")));
    }
    Ok(ValueEstimate::from_returns(
        &returns,
        opts.horizon,
        tail_bound(env.reward_bound(), opts.gamma, opts.horizon),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{FirmEnv, FirmParams, TabularEnv};
    use crate::meanfield::nu_mf;
    use crate::policy::{PolicyParams, TabularPolicy};
    use proptest::prelude::*;
    use rand::Rng;

    fn opts(gamma: f64, horizon: usize, rollouts: usize, seed: u64) -> EvalOptions {
        EvalOptions { gamma, horizon, rollouts, seed }
    }

    #[test]
    fn empirical_examples() {
        assert_eq!(empirical_state_dist(&[0, 0, 0], 2).unwrap().weights(), vec![1.0, 0.0]);
        assert_eq!(empirical_state_dist(&[0, 1, 1, 0], 2).unwrap().weights(), vec![0.5, 0.5]);
        assert_eq!(empirical_action_dist(&[1, 1], 2).unwrap().weights(), vec![0.0, 1.0]);
        assert_eq!(empirical_action_dist(&[0, 1, 0, 1, 0, 1], 2).unwrap().weights(), vec![0.5, 0.5]);
        assert!(matches!(empirical_state_dist(&[], 2), Err(Error::Argument(_))));
        assert!(matches!(empirical_state_dist(&[0, 2], 2), Err(Error::Argument(_))));
    }

    proptest! {
        #[test]
        fn empirical_counts_sum_to_population(locals in proptest::collection::vec(0usize..5, 1..200)) {
            let d = empirical_state_dist(&locals, 5).unwrap();
            prop_assert_eq!(d.counts().iter().sum::<usize>(), locals.len());
            let total: f64 = d.weights().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn empirical_is_permutation_invariant(mut actions in proptest::collection::vec(0usize..3, 1..100), seed in any::<u64>()) {
            let before = empirical_action_dist(&actions, 3).unwrap();
            let mut rng = substream(seed, "perm", &[]);
            for i in (1..actions.len()).rev() {
                let j = rng.random_range(0..=i);
                actions.swap(i, j);
            }
            prop_assert_eq!(before, empirical_action_dist(&actions, 3).unwrap());
        }
    }

    #[test]
    fn single_agent_identity_is_fixed_point() {
        let env = TabularEnv::identity(3, 2, 1);
        let policy = TabularPolicy::constant(3, 2, 1);
        let state = NAgentState::new(vec![2], GlobalState::Index(0));
        let mut rng = substream(0, "id", &[]);
        let (next, _) = step_nagent(&env, &policy, &state, &mut rng).unwrap();
        assert_eq!(next.locals, vec![2]);
        assert_eq!(next.global, GlobalState::Index(0));
        assert_eq!(next.t, 1);
    }

    #[test]
    fn constant_reward_step() {
        let env = TabularEnv::constant_reward(3, 2, 2, 1.25);
        let policy = TabularPolicy::uniform(3, 2);
        let mut rng = substream(1, "c", &[]);
        let state = NAgentState::new(vec![0, 2, 1, 1], GlobalState::Index(1));
        let (_, r) = step_nagent(&env, &policy, &state, &mut rng).unwrap();
        assert_eq!(r, 1.25);
    }

    #[test]
    fn firm_top_quality_stays() {
        let env = FirmEnv::new(FirmParams::default()).unwrap();
        let policy = TabularPolicy::constant(10, 2, 1);
        let mut rng = substream(2, "firm", &[]);
        let mut state = NAgentState::new(vec![9; 20], GlobalState::Scalar(1.0));
        for _ in 0..5 {
            state = step_nagent(&env, &policy, &state, &mut rng).unwrap().0;
            assert!(state.locals.iter().all(|&x| x == 9));
        }
    }

    #[test]
    fn step_rejects_invalid_state() {
        let env = TabularEnv::identity(2, 2, 1);
        let policy = TabularPolicy::uniform(2, 2);
        let mut rng = substream(3, "bad", &[]);
        let bad = NAgentState::new(vec![0, 5], GlobalState::Index(0));
        assert!(step_nagent(&env, &policy, &bad, &mut rng).is_err());
        let wrong_policy = TabularPolicy::uniform(2, 3);
        let ok = NAgentState::new(vec![0, 1], GlobalState::Index(0));
        assert!(step_nagent(&env, &wrong_policy, &ok, &mut rng).is_err());
    }

    #[test]
    fn degenerate_values() {
        let policy = TabularPolicy::uniform(2, 2);
        let zero = TabularEnv::identity(2, 2, 1);
        let e = estimate_value_nagent(&zero, &policy, &[0, 1], GlobalState::Index(0), &opts(0.9, 20, 8, 0)).unwrap();
        assert_eq!((e.mean, e.stderr), (0.0, 0.0));

        let c = 2.0;
        let env = TabularEnv::constant_reward(2, 2, 1, c);
        let h = 30;
        let e = estimate_value_nagent(&env, &policy, &[0, 1, 1], GlobalState::Index(0), &opts(0.9, h, 4, 0)).unwrap();
        let expected = c * (1.0 - 0.9f64.powi(h as i32)) / (1.0 - 0.9);
        assert!((e.mean - expected).abs() < 1e-12);
        assert_eq!(e.stderr, 0.0);
        assert!((e.tail_bound - c * 0.9f64.powi(30) / 0.1).abs() < 1e-12);
    }

    #[test]
    fn argument_errors() {
        let env = TabularEnv::identity(2, 2, 1);
        let policy = TabularPolicy::uniform(2, 2);
        let g = GlobalState::Index(0);
        assert!(estimate_value_nagent(&env, &policy, &[0], g, &opts(1.0, 5, 2, 0)).is_err());
        assert!(estimate_value_nagent(&env, &policy, &[0], g, &opts(0.5, 0, 2, 0)).is_err());
        assert!(estimate_value_nagent(&env, &policy, &[0], g, &opts(0.5, 5, 0, 0)).is_err());
    }

    #[test]
    fn worker_count_does_not_change_estimate() {
        let env = FirmEnv::new(FirmParams::default()).unwrap();
        let policy = TabularPolicy::uniform(10, 2);
        let locals: Vec<usize> = (0..50).map(|i| i % 10).collect();
        let o = opts(0.8, 25, 16, 11);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_value_nagent(&env, &policy, &locals, GlobalState::Scalar(1.0), &o).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn sorted_initial_condition_matches_permuted_in_distribution() {
        let env = FirmEnv::new(FirmParams::default()).unwrap();
        let policy = TabularPolicy::uniform(10, 2);
        let sorted: Vec<usize> = (0..40).map(|i| i / 4).collect();
        let mut shuffled = sorted.clone();
        shuffled.reverse();
        shuffled.swap(3, 17);
        let o = opts(0.8, 25, 400, 5);
        let g = GlobalState::Scalar(1.0);
        let a = estimate_value_nagent(&env, &policy, &sorted, g, &o).unwrap();
        let b = estimate_value_nagent(&env, &policy, &shuffled, g, &EvalOptions { seed: 6, ..o }).unwrap();
        let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        assert!((a.mean - b.mean).abs() <= 4.0 * se, "{} vs {} (se {se})", a.mean, b.mean);
    }

    #[test]
    fn value_non_decreasing_in_horizon_for_nonnegative_rewards() {
        let env = TabularEnv::builder(2, 2, 1)
            .local_kernel(|_, _, u| if u == 0 { vec![0.7, 0.3] } else { vec![0.2, 0.8] })
            .reward(|_, x, u| (x + u) as f64 * 0.5)
            .build()
            .unwrap();
        let policy = TabularPolicy::uniform(2, 2);
        let mut prev = f64::NEG_INFINITY;
        for h in [1, 2, 5, 10, 20] {
            let e = estimate_value_nagent(&env, &policy, &[0, 1, 0], GlobalState::Index(0), &opts(0.9, h, 50, 3)).unwrap();
            // common seed: each rollout's return only gains non-negative terms
            assert!(e.mean >= prev);
            prev = e.mean;
        }
    }

    #[test]
    fn action_distribution_concentrates() {
        // E|nu^N - nu_MF(mu^N, g, pi)|_1 <= sqrt(|U| / N)
        let env = FirmEnv::new(FirmParams::default()).unwrap();
        let mut rng = substream(8, "lemma9", &[]);
        let policy = PolicyParams::random(&env, 10.0, 1.0, &mut rng).unwrap();
        for n in [10usize, 100, 1000] {
            let samples = 500;
            let mut devs = Vec::with_capacity(samples);
            for _ in 0..samples {
                let locals: Vec<usize> = (0..n).map(|_| rng.random_range(0..10)).collect();
                let alpha = 0.5 + 0.5 * rng.random::<f64>();
                let g = GlobalState::Scalar(alpha);
                let mu = empirical_state_dist(&locals, 10).unwrap().to_simplex();
                let g_enc = env.encode_global(g);
                let actions: Vec<usize> = locals
                    .iter()
                    .map(|&x| sample_categorical(&policy.action_probs(x, mu.as_slice(), &g_enc), &mut rng))
                    .collect();
                let nu_n = empirical_action_dist(&actions, 2).unwrap().weights();
                let nu = nu_mf(&env, &policy, &mu, g).unwrap();
                devs.push(crate::simplex::l1_distance(&nu_n, nu.as_slice()));
            }
            let est = ValueEstimate::from_returns(&devs, 1, 0.0);
            let bound = (2.0 / n as f64).sqrt();
            assert!(est.mean <= bound + 3.0 * est.stderr, "N={n}: {} > {bound}", est.mean);
        }
    }
}
