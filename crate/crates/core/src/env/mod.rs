//! Model primitives: local and global transition kernels and the reward.
//!
//! An [`Environment`] sees the rest of the population only through the
//! state distribution `mu`, the global state `g` and the action
//! distribution `nu`, so every agent is exchangeable by construction.
//!
//! The trait methods are raw hooks and trust their inputs. The free functions
//! in this module validate indices and distributions before delegating.

mod firm;
mod tabular;

pub use firm::{FirmEnv, FirmParams};
pub use tabular::{TabularEnv, TabularEnvBuilder};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::sample_categorical;
use crate::simplex::{check_simplex, Simplex, SIMPLEX_TOL};

/// Shape of the global-state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlobalKind {
    /// `count` states indexed `0..count`.
    Finite(usize),
    /// A single real value.
    Scalar,
}

/// The state shared by every agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GlobalState {
    Index(usize),
    Scalar(f64),
}

impl GlobalState {
    pub fn index(self) -> Option<usize> {
        match self {
            GlobalState::Index(i) => Some(i),
            GlobalState::Scalar(_) => None,
        }
    }

    pub fn scalar(self) -> Option<f64> {
        match self {
            GlobalState::Scalar(v) => Some(v),
            GlobalState::Index(_) => None,
        }
    }
}

/// Distribution of the next global state over an enumerated support.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalLaw {
    outcomes: Vec<GlobalState>,
    weights: Simplex,
}

impl GlobalLaw {
    pub fn new(outcomes: Vec<GlobalState>, weights: Simplex) -> Result<Self> {
        if outcomes.len() != weights.len() {
            return Err(Error::invalid(format!(
                "{} outcomes but {} weights",
                outcomes.len(),
                weights.len()
            )));
        }
        Ok(GlobalLaw { outcomes, weights })
    }

    pub fn point_mass(g: GlobalState) -> Self {
        GlobalLaw {
            outcomes: vec![g],
            weights: Simplex::from_convex(vec![1.0]),
        }
    }

    /// Dense law over `0..weights.len()`.
    pub fn over_indices(weights: Simplex) -> Self {
        GlobalLaw {
            outcomes: (0..weights.len()).map(GlobalState::Index).collect(),
            weights,
        }
    }

    pub fn outcomes(&self) -> &[GlobalState] {
        &self.outcomes
    }

    pub fn weights(&self) -> &Simplex {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (GlobalState, f64)> + '_ {
        self.outcomes
            .iter()
            .copied()
            .zip(self.weights.as_slice().iter().copied())
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> GlobalState {
        self.outcomes[sample_categorical(self.weights.as_slice(), rng)]
    }
}

/// Regularity constants of a model and policy class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzConstants {
    /// Reward bound.
    pub m: f64,
    pub l_r: f64,
    pub l_p: f64,
    pub l_g: f64,
    /// Lipschitz constant of the policy in its distribution argument.
    pub l_q: f64,
}

impl LipschitzConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("M", self.m),
            ("L_R", self.l_r),
            ("L_P", self.l_p),
            ("L_G", self.l_g),
            ("L_Q", self.l_q),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::arg(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if self.m <= 0.0 {
            return Err(Error::arg(format!("M must be positive, got {}", self.m)));
        }
        Ok(())
    }
}

/// A model instance `(X, U, G, P, P_G, r, M)`.
pub trait Environment: Send + Sync {
    fn local_state_count(&self) -> usize;

    fn action_count(&self) -> usize;

    fn global_kind(&self) -> GlobalKind;

    /// Bound `M` on the absolute reward.
    fn reward_bound(&self) -> f64;

    /// Distribution of the next local state.
    fn local_transition(&self, x: usize, u: usize, mu: &[f64], g: GlobalState, nu: &[f64]) -> Vec<f64>;

    fn sample_local_transition(
        &self,
        x: usize,
        u: usize,
        mu: &[f64],
        g: GlobalState,
        nu: &[f64],
        rng: &mut dyn RngCore,
    ) -> usize {
        sample_categorical(&self.local_transition(x, u, mu, g, nu), rng)
    }

    /// Law of the next global state, when it can be enumerated.
    fn global_transition(&self, _mu: &[f64], _g: GlobalState, _nu: &[f64]) -> Result<GlobalLaw> {
        Err(Error::Capability(
            "global transition kernel is not enumerable for this environment".into(),
        ))
    }

    fn sample_global_transition(
        &self,
        mu: &[f64],
        g: GlobalState,
        nu: &[f64],
        rng: &mut dyn RngCore,
    ) -> Result<GlobalState> {
        Ok(self.global_transition(mu, g, nu)?.sample(rng))
    }

    fn reward(&self, x: usize, u: usize, mu: &[f64], g: GlobalState, nu: &[f64]) -> f64;

    /// True when the global chain never branches.
    fn global_is_deterministic(&self) -> bool {
        self.global_kind() == GlobalKind::Finite(1)
    }

    fn global_encoding_dim(&self) -> usize {
        match self.global_kind() {
            GlobalKind::Finite(n) => n,
            GlobalKind::Scalar => 1,
        }
    }

    /// Fixed-length real features of `g`. One-hot for finite spaces.
    fn encode_global(&self, g: GlobalState) -> Vec<f64> {
        match (self.global_kind(), g) {
            (GlobalKind::Finite(n), GlobalState::Index(i)) => {
                let mut v = vec![0.0; n];
                v[i] = 1.0;
                v
            }
            (_, GlobalState::Scalar(a)) => vec![a],
            (GlobalKind::Scalar, GlobalState::Index(i)) => vec![i as f64],
        }
    }

    /// Upper bound on the number of outcomes of one global transition.
    fn global_branching(&self) -> usize {
        if self.global_is_deterministic() {
            return 1;
        }
        match self.global_kind() {
            GlobalKind::Finite(n) => n,
            GlobalKind::Scalar => usize::MAX,
        }
    }
}

pub fn validate_global(env: &dyn Environment, g: GlobalState) -> Result<()> {
    match (env.global_kind(), g) {
        (GlobalKind::Finite(n), GlobalState::Index(i)) if i < n => Ok(()),
        (GlobalKind::Finite(n), GlobalState::Index(i)) => Err(Error::arg(format!(
            "global state {i} outside 0..{n}"
        ))),
        (GlobalKind::Scalar, GlobalState::Scalar(v)) if v.is_finite() => Ok(()),
        (GlobalKind::Scalar, GlobalState::Scalar(v)) => {
            Err(Error::arg(format!("scalar global state {v} is not finite")))
        }
        (kind, g) => Err(Error::arg(format!("global state {g:?} does not match {kind:?}"))),
    }
}

pub fn validate_mu(env: &dyn Environment, mu: &[f64]) -> Result<()> {
    if mu.len() != env.local_state_count() {
        return Err(Error::arg(format!(
            "state distribution has length {}, expected {}",
            mu.len(),
            env.local_state_count()
        )));
    }
    check_simplex(mu, SIMPLEX_TOL).map_err(|e| Error::invalid(format!("mu: {e}")))
}

pub fn validate_nu(env: &dyn Environment, nu: &[f64]) -> Result<()> {
    if nu.len() != env.action_count() {
        return Err(Error::arg(format!(
            "action distribution has length {}, expected {}",
            nu.len(),
            env.action_count()
        )));
    }
    check_simplex(nu, SIMPLEX_TOL).map_err(|e| Error::invalid(format!("nu: {e}")))
}

fn validate_xu(env: &dyn Environment, x: usize, u: usize) -> Result<()> {
    if x >= env.local_state_count() {
        return Err(Error::arg(format!(
            "local state {x} outside 0..{}",
            env.local_state_count()
        )));
    }
    if u >= env.action_count() {
        return Err(Error::arg(format!("action {u} outside 0..{}", env.action_count())));
    }
    Ok(())
}

fn validate_inputs(
    env: &dyn Environment,
    mu: &[f64],
    g: GlobalState,
    nu: &[f64],
) -> Result<()> {
    validate_mu(env, mu)?;
    validate_global(env, g)?;
    validate_nu(env, nu)
}

pub fn local_transition_sample(
    env: &dyn Environment,
    x: usize,
    u: usize,
    mu: &[f64],
    g: GlobalState,
    nu: &[f64],
    rng: &mut dyn RngCore,
) -> Result<usize> {
    validate_xu(env, x, u)?;
    validate_inputs(env, mu, g, nu)?;
    Ok(env.sample_local_transition(x, u, mu, g, nu, rng))
}

pub fn global_transition_sample(
    env: &dyn Environment,
    mu: &[f64],
    g: GlobalState,
    nu: &[f64],
    rng: &mut dyn RngCore,
) -> Result<GlobalState> {
    validate_inputs(env, mu, g, nu)?;
    env.sample_global_transition(mu, g, nu, rng)
}

pub fn global_transition_dist(
    env: &dyn Environment,
    mu: &[f64],
    g: GlobalState,
    nu: &[f64],
) -> Result<GlobalLaw> {
    validate_inputs(env, mu, g, nu)?;
    env.global_transition(mu, g, nu)
}

pub fn reward(
    env: &dyn Environment,
    x: usize,
    u: usize,
    mu: &[f64],
    g: GlobalState,
    nu: &[f64],
) -> Result<f64> {
    validate_xu(env, x, u)?;
    validate_inputs(env, mu, g, nu)?;
    let r = env.reward(x, u, mu, g, nu);
    if !r.is_finite() {
        return Err(Error::Numeric(format!("reward at x={x}, u={u} is {r}")));
    }
    Ok(r)
}

pub fn encode_global(env: &dyn Environment, g: GlobalState) -> Result<Vec<f64>> {
    validate_global(env, g)?;
    Ok(env.encode_global(g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::substream;

    #[test]
    fn one_hot_encoding() {
        let env = TabularEnv::identity(2, 1, 3);
        assert_eq!(encode_global(&env, GlobalState::Index(1)).unwrap(), vec![0.0, 1.0, 0.0]);
        for i in 0..3 {
            assert_eq!(env.encode_global(GlobalState::Index(i)).len(), env.global_encoding_dim());
        }
    }

    #[test]
    fn identity_kernel_keeps_state() {
        let env = TabularEnv::identity(3, 2, 1);
        let mut rng = substream(0, "id", &[]);
        let mu = [0.2, 0.3, 0.5];
        for x in 0..3 {
            for u in 0..2 {
                let y = local_transition_sample(&env, x, u, &mu, GlobalState::Index(0), &[0.5, 0.5], &mut rng)
                    .unwrap();
                assert_eq!(y, x);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let env = TabularEnv::identity(2, 2, 2);
        let mut rng = substream(0, "bad", &[]);
        let g = GlobalState::Index(0);
        let ok = [0.5, 0.5];
        assert!(matches!(
            local_transition_sample(&env, 2, 0, &ok, g, &ok, &mut rng),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            local_transition_sample(&env, 0, 5, &ok, g, &ok, &mut rng),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            local_transition_sample(&env, 0, 0, &[0.7, 0.7], g, &ok, &mut rng),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            reward(&env, 0, 0, &ok, g, &[1.2, -0.2]),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            reward(&env, 0, 0, &ok, GlobalState::Index(2), &ok),
            Err(Error::Argument(_))
        ));
        assert!(matches!(
            reward(&env, 0, 0, &ok, GlobalState::Scalar(0.1), &ok),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn uniform_global_kernel_law() {
        let env = TabularEnv::builder(1, 1, 3).uniform_global().build().unwrap();
        let law = global_transition_dist(&env, &[1.0], GlobalState::Index(2), &[1.0]).unwrap();
        for &w in law.weights().as_slice() {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
        let total: f64 = law.weights().as_slice().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_global_kernel_frequencies() {
        let env = TabularEnv::builder(1, 1, 2).uniform_global().build().unwrap();
        let mut rng = substream(3, "glob", &[]);
        let n = 10_000;
        let mut ones = 0usize;
        for _ in 0..n {
            match global_transition_sample(&env, &[1.0], GlobalState::Index(0), &[1.0], &mut rng).unwrap() {
                GlobalState::Index(1) => ones += 1,
                GlobalState::Index(0) => {}
                other => panic!("unexpected {other:?}"),
            }
        }
        let f = ones as f64 / n as f64;
        let sd = (0.25 / n as f64).sqrt();
        assert!((f - 0.5).abs() <= 3.0 * sd, "{f}");
    }

    #[test]
    fn lipschitz_validation() {
        let ok = LipschitzConstants { m: 1.0, l_r: 0.0, l_p: 0.0, l_g: 0.0, l_q: 0.0 };
        assert!(ok.validate().is_ok());
        assert!(LipschitzConstants { m: 0.0, ..ok }.validate().is_err());
        assert!(LipschitzConstants { l_p: -1.0, ..ok }.validate().is_err());
        assert!(LipschitzConstants { l_g: f64::NAN, ..ok }.validate().is_err());
    }
}
