use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{Environment, FirmEnv, FirmParams, GlobalKind, GlobalState, TabularEnv};
use crate::error::{Error, Result};
use crate::estimate::{default_horizon, EvalOptions};
use crate::npg::NpgConfig;
use crate::policy::{PolicyParams, DEFAULT_WEIGHT_CAP};
use crate::seeding::substream;
use crate::simplex::Simplex;

/// Top-level experiment description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub master_seed: u64,
    pub env: EnvConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnvConfig {
    Firm(FirmParams),
    Tabular(TabularConfig),
}

/// A tabular environment with identity local kernels, a constant global
/// state chain and the given reward table, or fully random tables when
/// `random_seed` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularConfig {
    pub n_x: usize,
    pub n_u: usize,
    #[serde(default = "one")]
    pub n_g: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_seed: Option<u64>,
    /// Flat `[g][x][u]` reward table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<Vec<f64>>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PolicyInit {
    #[default]
    Zeros,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default = "default_weight_cap")]
    pub weight_cap: f64,
    #[serde(default)]
    pub init: PolicyInit,
    /// Scale of uniform initial weights when `init = "random"`.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default)]
    pub init_seed: u64,
    /// Trained policy used by the simulation and sweep commands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact: Option<PathBuf>,
}

fn default_weight_cap() -> f64 {
    DEFAULT_WEIGHT_CAP
}

fn default_init_scale() -> f64 {
    0.1
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            weight_cap: DEFAULT_WEIGHT_CAP,
            init: PolicyInit::Zeros,
            init_scale: default_init_scale(),
            init_seed: 0,
            artifact: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub eta: f64,
    pub alpha: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub horizon_cap: usize,
    /// Rollouts for the per-iteration value estimate.
    pub eval_rollouts: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let d = NpgConfig::default();
        TrainConfig {
            eta: d.eta,
            alpha: d.alpha,
            outer_iters: d.outer_iters,
            inner_iters: d.inner_iters,
            horizon_cap: d.horizon_cap,
            eval_rollouts: d.eval_rollouts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub gamma: f64,
    /// Rollout length; defaults to the shortest horizon whose worst-case
    /// truncated tail is below `1e-3`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Rollouts per N-agent value estimate.
    pub rollouts: usize,
    /// Path budget for exact mean-field evaluation.
    pub exact_cap: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            gamma: 0.9,
            horizon: None,
            rollouts: 100,
            exact_cap: crate::meanfield::DEFAULT_PATH_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n_grid: Vec<usize>,
    pub seeds: usize,
    /// Initial local-state distribution; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<Vec<f64>>,
    /// Initial global state: a price for the firm model, an index for
    /// tabular models. Defaults to `lambda0` and `0` respectively.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g0: Option<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            n_grid: vec![50, 100, 200, 500, 1000],
            seeds: 25,
            mu0: None,
            g0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

fn within(section: &str, err: Error) -> Error {
    match err {
        Error::Config { field, message } => Error::Config {
            field: format!("{section}.{field}"),
            message,
        },
        other => other,
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .message()
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "<document>".into());
            Error::config(field, e.to_string().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("<file>", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.env {
            EnvConfig::Firm(p) => p.validate().map_err(|e| within("env", e))?,
            EnvConfig::Tabular(t) => t.validate().map_err(|e| within("env", e))?,
        }
        let p = &self.policy;
        if !(p.weight_cap.is_finite() && p.weight_cap > 0.0) {
            return Err(Error::config("policy.weight_cap", format!("must be positive, got {}", p.weight_cap)));
        }
        if !(p.init_scale.is_finite() && p.init_scale >= 0.0) {
            return Err(Error::config("policy.init_scale", format!("must be non-negative, got {}", p.init_scale)));
        }
        let e = &self.eval;
        if !(e.gamma > 0.0 && e.gamma < 1.0) {
            return Err(Error::config("eval.gamma", format!("must lie in (0, 1), got {}", e.gamma)));
        }
        if e.horizon == Some(0) {
            return Err(Error::config("eval.horizon", "must be at least 1"));
        }
        if e.rollouts == 0 {
            return Err(Error::config("eval.rollouts", "must be at least 1"));
        }
        if e.exact_cap == 0 {
            return Err(Error::config("eval.exact_cap", "must be at least 1"));
        }
        self.npg_config().validate().map_err(|e| within("train", e))?;
        let s = &self.sweep;
        if s.n_grid.is_empty() || s.n_grid.contains(&0) {
            return Err(Error::config("sweep.n_grid", "must be a non-empty list of positive sizes"));
        }
        if s.seeds == 0 {
            return Err(Error::config("sweep.seeds", "must be at least 1"));
        }
        let env = self.build_env()?;
        self.mu0(env.as_ref())?;
        self.g0(env.as_ref())?;
        Ok(())
    }

    pub fn build_env(&self) -> Result<Box<dyn Environment>> {
        Ok(match &self.env {
            EnvConfig::Firm(p) => Box::new(FirmEnv::new(*p).map_err(|e| within("env", e))?),
            EnvConfig::Tabular(t) => Box::new(t.build().map_err(|e| within("env", e))?),
        })
    }

    pub fn mu0(&self, env: &dyn Environment) -> Result<Simplex> {
        match &self.sweep.mu0 {
            None => Simplex::uniform(env.local_state_count()),
            Some(v) if v.len() != env.local_state_count() => Err(Error::config(
                "sweep.mu0",
                format!("has {} entries, the environment has {} local states", v.len(), env.local_state_count()),
            )),
            Some(v) => Simplex::new(v.clone()).map_err(|e| Error::config("sweep.mu0", e.to_string())),
        }
    }

    pub fn g0(&self, env: &dyn Environment) -> Result<GlobalState> {
        match (env.global_kind(), &self.env, self.sweep.g0) {
            (GlobalKind::Scalar, EnvConfig::Firm(p), None) => Ok(GlobalState::Scalar(p.lambda0)),
            (GlobalKind::Scalar, _, Some(a)) if a.is_finite() => Ok(GlobalState::Scalar(a)),
            (GlobalKind::Finite(_), _, None) => Ok(GlobalState::Index(0)),
            (GlobalKind::Finite(n), _, Some(i)) if i >= 0.0 && i.fract() == 0.0 && (i as usize) < n => {
                Ok(GlobalState::Index(i as usize))
            }
            (_, _, g) => Err(Error::config("sweep.g0", format!("{g:?} is not a valid initial global state"))),
        }
    }

    pub fn horizon(&self) -> usize {
        self.eval.horizon.unwrap_or_else(|| default_horizon(self.eval.gamma))
    }

    pub fn eval_options(&self, seed: u64) -> EvalOptions {
        EvalOptions {
            gamma: self.eval.gamma,
            horizon: self.horizon(),
            rollouts: self.eval.rollouts,
            seed,
        }
    }

    pub fn npg_config(&self) -> NpgConfig {
        let t = &self.train;
        NpgConfig {
            eta: t.eta,
            alpha: t.alpha,
            outer_iters: t.outer_iters,
            inner_iters: t.inner_iters,
            gamma: self.eval.gamma,
            master_seed: self.master_seed,
            horizon_cap: t.horizon_cap,
            eval_horizon: self.horizon(),
            eval_rollouts: t.eval_rollouts,
        }
    }

    /// Starting parameters for training.
    pub fn initial_policy(&self, env: &dyn Environment) -> Result<PolicyParams> {
        match self.policy.init {
            PolicyInit::Zeros => PolicyParams::for_env(env, self.policy.weight_cap),
            PolicyInit::Random => {
                let mut rng = substream(self.policy.init_seed, "policy-init", &[]);
                PolicyParams::random(env, self.policy.weight_cap, self.policy.init_scale, &mut rng)
            }
        }
    }

    /// SHA-256 of the canonical JSON form, identifying a resolved config.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl TabularConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("n_x", self.n_x), ("n_u", self.n_u), ("n_g", self.n_g)] {
            if v == 0 {
                return Err(Error::config(name, "must be at least 1"));
            }
        }
        if let Some(r) = &self.reward {
            if self.random_seed.is_some() {
                return Err(Error::config("reward", "cannot be combined with random_seed"));
            }
            let want = self.n_g * self.n_x * self.n_u;
            if r.len() != want {
                return Err(Error::config("reward", format!("needs {want} entries, got {}", r.len())));
            }
            if let Some(v) = r.iter().find(|v| !v.is_finite()) {
                return Err(Error::config("reward", format!("entries must be finite, got {v}")));
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<TabularEnv> {
        self.validate()?;
        if let Some(seed) = self.random_seed {
            return Ok(TabularEnv::random(self.n_x, self.n_u, self.n_g, &mut substream(seed, "tabular-env", &[])));
        }
        let (n_x, n_u) = (self.n_x, self.n_u);
        let table = self.reward.clone().unwrap_or_else(|| vec![0.0; self.n_g * n_x * n_u]);
        TabularEnv::builder(n_x, n_u, self.n_g)
            .reward(|g, x, u| table[(g * n_x + x) * n_u + u])
            .build()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIRM: &str = r#"
master_seed = 3

[env]
kind = "firm"
q = 10
lambda0 = 1.0
lambda1 = 0.5
beta_r = 0.5
lambda_r = 0.5

[eval]
gamma = 0.9
rollouts = 20
exact_cap = 1000

[sweep]
n_grid = [10, 20]
seeds = 2
"#;

    fn field_of(err: Error) -> String {
        match err {
            Error::Config { field, .. } => field,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn parses_and_defaults() {
        let cfg = ExperimentConfig::from_toml_str(FIRM).unwrap();
        assert_eq!(cfg.master_seed, 3);
        assert_eq!(cfg.env, EnvConfig::Firm(FirmParams::default()));
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(cfg.horizon(), default_horizon(0.9));
        let env = cfg.build_env().unwrap();
        assert_eq!(cfg.g0(env.as_ref()).unwrap(), GlobalState::Scalar(1.0));
        assert_eq!(cfg.mu0(env.as_ref()).unwrap(), Simplex::uniform(10).unwrap());
        assert_eq!(cfg.npg_config().gamma, 0.9);
    }

    #[test]
    fn names_offending_fields() {
        let bad = FIRM.replace("gamma = 0.9", "gamma = 1.5");
        assert_eq!(field_of(ExperimentConfig::from_toml_str(&bad).unwrap_err()), "eval.gamma");
        let bad = FIRM.replace("q = 10", "q = 1");
        assert_eq!(field_of(ExperimentConfig::from_toml_str(&bad).unwrap_err()), "env.q");
        let bad = FIRM.replace("seeds = 2", "seeds = 0");
        assert_eq!(field_of(ExperimentConfig::from_toml_str(&bad).unwrap_err()), "sweep.seeds");
        let bad = FIRM.replace("[sweep]", "[sweep]\nmu0 = [0.5, 0.5]");
        assert_eq!(field_of(ExperimentConfig::from_toml_str(&bad).unwrap_err()), "sweep.mu0");
        let bad = format!("{FIRM}\n[train]\neta = -1.0\nalpha = 0.1\nouter_iters = 1\ninner_iters = 1\nhorizon_cap = 10\neval_rollouts = 1\n");
        assert_eq!(field_of(ExperimentConfig::from_toml_str(&bad).unwrap_err()), "train.eta");
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = FIRM.replace("rollouts = 20", "rollouts = 20\ngama = 0.3");
        let err = ExperimentConfig::from_toml_str(&bad).unwrap_err();
        assert!(err.to_string().contains("gama"), "{err}");
        let bad = FIRM.replace("lambda_r = 0.5", "lambda_r = 0.5\nmu = 2");
        assert!(ExperimentConfig::from_toml_str(&bad).unwrap_err().to_string().contains("mu"));
        let bad = FIRM.replace("kind = \"firm\"", "kind = \"forest\"");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn tabular_envs() {
        let text = r#"
[env]
kind = "tabular"
n_x = 2
n_u = 2
n_g = 2
random_seed = 4

[sweep]
n_grid = [5]
seeds = 1
g0 = 1
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let env = cfg.build_env().unwrap();
        assert_eq!(env.global_kind(), GlobalKind::Finite(2));
        assert_eq!(cfg.g0(env.as_ref()).unwrap(), GlobalState::Index(1));
        let bad = text.replace("g0 = 1", "g0 = 2");
        assert_eq!(field_of(ExperimentConfig::from_toml_str(&bad).unwrap_err()), "sweep.g0");
        let bad = text.replace("random_seed = 4", "reward = [1.0]");
        assert_eq!(field_of(ExperimentConfig::from_toml_str(&bad).unwrap_err()), "env.reward");
    }

    #[test]
    fn digest_tracks_content() {
        let a = ExperimentConfig::from_toml_str(FIRM).unwrap();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.master_seed += 1;
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }
}
