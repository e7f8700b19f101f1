//! The `mfc` command-line tool.
//!
//! Exit codes: 0 on success, 1 for invalid arguments or configuration, 2 for
//! failures at run time (I/O, missing artifacts, invalid bound regions).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::bounds::{theorem1_bound, theorem1_constants, theorem2_bound, theorem2_constants};
use crate::env::{Environment, LipschitzConstants};
use crate::error::{Error, Result};
use crate::experiment::{
    load_policy, run_error_sweep, save_policy, summarize, write_metadata, write_summary_csv, write_sweep_csv,
    write_trace_csv, ExperimentConfig, PolicyArtifact, RunMetadata, SweepOptions, ARTIFACT_VERSION,
};
use crate::meanfield::{estimate_value_mfc_mc, exact_value_mfc};
use crate::nagent::{estimate_value_nagent, sample_initial_locals};
use crate::npg::npg_run;
use crate::policy::PolicyParams;
use crate::seeding::{child_seed, substream};

#[derive(Debug, Parser)]
#[command(name = "mfc", version, about = "Mean-field control experiments for many-agent systems with a shared global state")]
pub struct Cli {
    /// Worker threads for rollouts and sweep cells (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// Overrides `master_seed` from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `output.dir` from the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Record wall-clock times in CSV outputs (makes them non-reproducible).
    #[arg(long, global = true)]
    pub timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy with natural policy gradient and save it with its trace.
    Train {
        /// Experiment configuration (TOML).
        config: PathBuf,
    },
    /// Estimate the N-agent value of a policy.
    SimulateNagent {
        /// Experiment configuration (TOML).
        config: PathBuf,
        /// Policy artifact; defaults to `policy.artifact`, else the initial policy.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Number of agents.
        #[arg(long)]
        n: usize,
    },
    /// Evaluate the mean-field value of a policy.
    SimulateMfc {
        /// Experiment configuration (TOML).
        config: PathBuf,
        /// Policy artifact; defaults to `policy.artifact`, else the initial policy.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Measure |V_N - V_inf| over the configured grid of population sizes.
    ErrorSweep {
        /// Experiment configuration (TOML).
        config: PathBuf,
        /// Policy artifact; defaults to `policy.artifact` (one of the two is required).
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Evaluate the closed-form approximation-error bounds.
    Bounds(BoundsArgs),
    /// Check a configuration file and report the first invalid field.
    ValidateConfig {
        /// Experiment configuration (TOML).
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
#[command(next_help_heading = "Bound inputs")]
pub struct BoundsArgs {
    /// Reward bound M.
    #[arg(long)]
    pub m: f64,
    /// Reward Lipschitz constant L_R.
    #[arg(long, default_value_t = 0.0)]
    pub l_r: f64,
    /// Transition Lipschitz constant L_P.
    #[arg(long, default_value_t = 0.0)]
    pub l_p: f64,
    /// Global-transition Lipschitz constant L_G.
    #[arg(long, default_value_t = 0.0)]
    pub l_g: f64,
    /// Policy Lipschitz constant L_Q.
    #[arg(long, default_value_t = 0.0)]
    pub l_q: f64,
    /// Discount factor.
    #[arg(long)]
    pub gamma: f64,
    /// Number of local states |X|.
    #[arg(long)]
    pub x_size: usize,
    /// Number of actions |U|.
    #[arg(long)]
    pub u_size: usize,
    /// Population sizes to tabulate.
    #[arg(long, value_delimiter = ',', default_values_t = vec![10u64, 100, 1_000, 10_000])]
    pub n: Vec<u64>,
}

/// Parses `std::env::args` and runs the command.
pub fn main() -> i32 {
    run(std::env::args_os())
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return 2;
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn load_config(cli: &Cli, path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    // artifact paths in a config are relative to the config file
    if let (Some(a), Some(dir)) = (&cfg.policy.artifact, path.parent()) {
        if a.is_relative() {
            cfg.policy.artifact = Some(dir.join(a));
        }
    }
    Ok(cfg)
}

fn resolve_policy(cfg: &ExperimentConfig, env: &dyn Environment, flag: Option<&PathBuf>) -> Result<Option<PolicyParams>> {
    match flag.or(cfg.policy.artifact.as_ref()) {
        Some(path) => Ok(Some(load_policy(path, env)?.params)),
        None => Ok(None),
    }
}

fn metadata(cfg: &ExperimentConfig, command: &str, rows: usize) -> RunMetadata {
    RunMetadata {
        artifact_version: ARTIFACT_VERSION,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config_digest: cfg.digest(),
        master_seed: cfg.master_seed,
        rows,
    }
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::ValidateConfig { config } => {
            let cfg = load_config(cli, config)?;
            println!("{}: ok (digest {})", config.display(), cfg.digest());
            Ok(())
        }
        Command::Bounds(args) => bounds(args),
        Command::Train { config } => train(cli, &load_config(cli, config)?),
        Command::SimulateNagent { config, policy, n } => {
            let cfg = load_config(cli, config)?;
            if *n == 0 {
                return Err(Error::arg("--n must be at least 1"));
            }
            let env = cfg.build_env()?;
            let pol = match resolve_policy(&cfg, env.as_ref(), policy.as_ref())? {
                Some(p) => p,
                None => cfg.initial_policy(env.as_ref())?,
            };
            let mu0 = cfg.mu0(env.as_ref())?;
            let g0 = cfg.g0(env.as_ref())?;
            let locals = sample_initial_locals(&mu0, *n, &mut substream(cfg.master_seed, "simulate-init", &[*n as u64]));
            let opts = cfg.eval_options(child_seed(cfg.master_seed, "simulate-nagent", &[*n as u64]));
            let v = estimate_value_nagent(env.as_ref(), &pol, &locals, g0, &opts)?;
            println!("{}", json!({ "N": n, "value": v }));
            Ok(())
        }
        Command::SimulateMfc { config, policy } => {
            let cfg = load_config(cli, config)?;
            let env = cfg.build_env()?;
            let pol = match resolve_policy(&cfg, env.as_ref(), policy.as_ref())? {
                Some(p) => p,
                None => cfg.initial_policy(env.as_ref())?,
            };
            let mu0 = cfg.mu0(env.as_ref())?;
            let g0 = cfg.g0(env.as_ref())?;
            let out = match exact_value_mfc(env.as_ref(), &pol, &mu0, g0, cfg.eval.gamma, cfg.horizon(), cfg.eval.exact_cap) {
                Ok(v) => json!({ "method": "exact", "value": v.value, "dropped_mass": v.dropped_mass, "tail_bound": v.tail_bound }),
                Err(Error::Capacity { .. } | Error::Capability(_)) => {
                    let opts = cfg.eval_options(child_seed(cfg.master_seed, "simulate-mfc", &[]));
                    let v = estimate_value_mfc_mc(env.as_ref(), &pol, &mu0, g0, &opts)?;
                    json!({ "method": "monte-carlo", "value": v })
                }
                Err(e) => return Err(e),
            };
            println!("{out}");
            Ok(())
        }
        Command::ErrorSweep { config, policy } => {
            let cfg = load_config(cli, config)?;
            let env = cfg.build_env()?;
            let pol = resolve_policy(&cfg, env.as_ref(), policy.as_ref())?
                .ok_or_else(|| Error::arg("error-sweep needs a trained policy: pass --policy or set policy.artifact"))?;
            let rows = run_error_sweep(&cfg, env.as_ref(), &pol, SweepOptions { timing: cli.timing })?;
            let summary = summarize(&rows);
            let dir = &cfg.output.dir;
            std::fs::create_dir_all(dir)?;
            write_sweep_csv(&dir.join("sweep.csv"), &rows)?;
            write_summary_csv(&dir.join("summary.csv"), &summary)?;
            write_metadata(&dir.join("sweep.meta.json"), &metadata(&cfg, "error-sweep", rows.len()))?;
            println!("{:>8} {:>6} {:>14} {:>14}", "N", "seeds", "mean_error", "std_error");
            for s in &summary {
                println!("{:>8} {:>6} {:>14.6e} {:>14.6e}", s.n, s.seeds, s.mean_error, s.std_error);
            }
            println!("wrote {}", dir.join("sweep.csv").display());
            Ok(())
        }
    }
}

fn train(cli: &Cli, cfg: &ExperimentConfig) -> Result<()> {
    let env = cfg.build_env()?;
    let phi0 = cfg.initial_policy(env.as_ref())?;
    let mu0 = cfg.mu0(env.as_ref())?;
    let g0 = cfg.g0(env.as_ref())?;
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir)?;
    let (trace, failure) = match npg_run(env.as_ref(), &phi0, &mu0, g0, &cfg.npg_config()) {
        Ok(t) => (t, None),
        Err(abort) => (abort.partial, Some(abort.error)),
    };
    write_trace_csv(&dir.join("trace.csv"), &trace, cli.timing)?;
    write_metadata(&dir.join("trace.meta.json"), &metadata(cfg, "train", trace.records.len()))?;
    if let Some(e) = failure {
        return Err(e);
    }
    let artifact = PolicyArtifact {
        version: ARTIFACT_VERSION,
        env: cfg.env.clone(),
        params: trace.final_policy(),
    };
    save_policy(&dir.join("policy.json"), &artifact)?;
    if let Some(last) = trace.records.last() {
        println!(
            "trained {} iterations; final mean-field value {:.6} (stderr {:.2e})",
            last.j, last.value.mean, last.value.stderr
        );
    }
    println!("wrote {}", dir.join("policy.json").display());
    Ok(())
}

fn bounds(args: &BoundsArgs) -> Result<()> {
    let c = LipschitzConstants {
        m: args.m,
        l_r: args.l_r,
        l_p: args.l_p,
        l_g: args.l_g,
        l_q: args.l_q,
    };
    c.validate()?;
    if args.n.is_empty() || args.n.contains(&0) {
        return Err(Error::arg("--n must list positive population sizes"));
    }
    let k1 = theorem1_constants(&c);
    let k2 = theorem2_constants(&c);
    println!(
        "S_P = {}  S_R = {}  S_G = {}  C_P = {}  Q_P = {}  Q_R = {}",
        k1.s_p, k1.s_r, k1.s_g, k1.c_p, k2.q_p, k2.q_r
    );
    let mut rows = Vec::with_capacity(args.n.len());
    for &n in &args.n {
        let b1 = theorem1_bound(&k1, args.gamma, n, args.x_size, args.u_size, c.m, c.l_r, c.l_g)?;
        let b2 = theorem2_bound(&k2, args.gamma, n, args.x_size, c.m, c.l_g)?;
        rows.push((n, b1, b2));
    }
    println!("{:>12} {:>16} {:>16}", "N", "general", "action-free");
    for (n, b1, b2) in rows {
        println!("{n:>12} {b1:>16.6e} {b2:>16.6e}");
    }
    Ok(())
}
