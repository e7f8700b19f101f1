//! Small finite environments given by explicit tables.
//!
//! The local kernel is a blend of two tables weighted by `mu[0]`, the global
//! kernel a blend of two tables weighted by `nu[0]`, and the reward a table
//! plus linear terms in `mu[0]` and `nu[0]`. That keeps every mean-field
//! coupling exercisable while all laws stay enumerable.

use rand::Rng;

use super::{Environment, GlobalKind, GlobalLaw, GlobalState};
use crate::error::{Error, Result};
use crate::simplex::{check_simplex, Simplex};

#[derive(Debug, Clone)]
pub struct TabularEnv {
    n_x: usize,
    n_u: usize,
    n_g: usize,
    /// `[g][x][u][y]`
    local: Vec<f64>,
    local_alt: Option<Vec<f64>>,
    /// `[g][h]`
    global: Vec<f64>,
    global_alt: Option<Vec<f64>>,
    /// `[g][x][u]`
    reward: Vec<f64>,
    reward_mu: f64,
    reward_nu: f64,
    deterministic_global: bool,
}

pub struct TabularEnvBuilder {
    env: TabularEnv,
}

fn gidx(g: GlobalState) -> usize {
    g.index().expect("tabular environments have finite global states")
}

impl TabularEnv {
    /// Identity kernels and zero reward.
    pub fn builder(n_x: usize, n_u: usize, n_g: usize) -> TabularEnvBuilder {
        let mut local = vec![0.0; n_g * n_x * n_u * n_x];
        for g in 0..n_g {
            for x in 0..n_x {
                for u in 0..n_u {
                    local[((g * n_x + x) * n_u + u) * n_x + x] = 1.0;
                }
            }
        }
        let mut global = vec![0.0; n_g * n_g];
        for g in 0..n_g {
            global[g * n_g + g] = 1.0;
        }
        TabularEnvBuilder {
            env: TabularEnv {
                n_x,
                n_u,
                n_g,
                local,
                local_alt: None,
                global,
                global_alt: None,
                reward: vec![0.0; n_g * n_x * n_u],
                reward_mu: 0.0,
                reward_nu: 0.0,
                deterministic_global: true,
            },
        }
    }

    pub fn identity(n_x: usize, n_u: usize, n_g: usize) -> Self {
        Self::builder(n_x, n_u, n_g).build().expect("identity tables are valid")
    }

    pub fn constant_reward(n_x: usize, n_u: usize, n_g: usize, c: f64) -> Self {
        Self::builder(n_x, n_u, n_g)
            .reward(|_, _, _| c)
            .build()
            .expect("constant tables are valid")
    }

    /// Random kernels, rewards in `[-1, 1]` and random mean-field couplings.
    pub fn random<R: Rng + ?Sized>(n_x: usize, n_u: usize, n_g: usize, rng: &mut R) -> Self {
        fn draw<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
            let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|p| *p /= s);
            v
        }
        let mut b = Self::builder(n_x, n_u, n_g);
        let base: Vec<Vec<f64>> = (0..n_g * n_x * n_u).map(|_| draw(n_x, rng)).collect();
        let alt: Vec<Vec<f64>> = (0..n_g * n_x * n_u).map(|_| draw(n_x, rng)).collect();
        let gbase: Vec<Vec<f64>> = (0..n_g).map(|_| draw(n_g, rng)).collect();
        let galt: Vec<Vec<f64>> = (0..n_g).map(|_| draw(n_g, rng)).collect();
        let rewards: Vec<f64> = (0..n_g * n_x * n_u).map(|_| rng.random_range(-1.0..1.0)).collect();
        let k = |g: usize, x: usize, u: usize| (g * n_x + x) * n_u + u;
        b = b
            .local_kernel(|g, x, u| base[k(g, x, u)].clone())
            .local_kernel_alt(|g, x, u| alt[k(g, x, u)].clone())
            .global_kernel(|g| gbase[g].clone())
            .global_kernel_alt(|g| galt[g].clone())
            .reward(|g, x, u| rewards[k(g, x, u)])
            .reward_coupling(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        b.build().expect("random tables are valid")
    }

    pub fn global_count(&self) -> usize {
        self.n_g
    }

    fn local_row(table: &[f64], n_x: usize, n_u: usize, g: usize, x: usize, u: usize) -> &[f64] {
        let start = ((g * n_x + x) * n_u + u) * n_x;
        &table[start..start + n_x]
    }
}

impl TabularEnvBuilder {
    pub fn local_kernel(mut self, f: impl Fn(usize, usize, usize) -> Vec<f64>) -> Self {
        self.env.local = self.fill_local(f);
        self
    }

    pub fn local_kernel_alt(mut self, f: impl Fn(usize, usize, usize) -> Vec<f64>) -> Self {
        self.env.local_alt = Some(self.fill_local(f));
        self
    }

    pub fn global_kernel(mut self, f: impl Fn(usize) -> Vec<f64>) -> Self {
        self.env.global = self.fill_global(f);
        self
    }

    pub fn global_kernel_alt(mut self, f: impl Fn(usize) -> Vec<f64>) -> Self {
        self.env.global_alt = Some(self.fill_global(f));
        self
    }

    pub fn uniform_global(self) -> Self {
        let n = self.env.n_g;
        self.global_kernel(|_| vec![1.0 / n as f64; n])
    }

    pub fn reward(mut self, f: impl Fn(usize, usize, usize) -> f64) -> Self {
        let (n_x, n_u, n_g) = (self.env.n_x, self.env.n_u, self.env.n_g);
        let mut r = Vec::with_capacity(n_g * n_x * n_u);
        for g in 0..n_g {
            for x in 0..n_x {
                for u in 0..n_u {
                    r.push(f(g, x, u));
                }
            }
        }
        self.env.reward = r;
        self
    }

    /// Adds `c_mu * mu[0] + c_nu * nu[0]` to every reward.
    pub fn reward_coupling(mut self, c_mu: f64, c_nu: f64) -> Self {
        self.env.reward_mu = c_mu;
        self.env.reward_nu = c_nu;
        self
    }

    fn fill_local(&self, f: impl Fn(usize, usize, usize) -> Vec<f64>) -> Vec<f64> {
        let (n_x, n_u, n_g) = (self.env.n_x, self.env.n_u, self.env.n_g);
        let mut t = Vec::with_capacity(n_g * n_x * n_u * n_x);
        for g in 0..n_g {
            for x in 0..n_x {
                for u in 0..n_u {
                    let row = f(g, x, u);
                    // length mismatches surface in build()
                    t.extend(row.into_iter().chain(std::iter::repeat(f64::NAN)).take(n_x));
                }
            }
        }
        t
    }

    fn fill_global(&self, f: impl Fn(usize) -> Vec<f64>) -> Vec<f64> {
        let n_g = self.env.n_g;
        let mut t = Vec::with_capacity(n_g * n_g);
        for g in 0..n_g {
            t.extend(f(g).into_iter().chain(std::iter::repeat(f64::NAN)).take(n_g));
        }
        t
    }

    pub fn build(mut self) -> Result<TabularEnv> {
        let e = &self.env;
        if e.n_x == 0 || e.n_u == 0 || e.n_g == 0 {
            return Err(Error::arg("tabular environment needs non-empty X, U and G"));
        }
        for table in std::iter::once(&e.local).chain(e.local_alt.as_ref()) {
            for (i, row) in table.chunks(e.n_x).enumerate() {
                check_simplex(row, 1e-12)
                    .map_err(|err| Error::invalid(format!("local kernel row {i}: {err}")))?;
            }
        }
        for table in std::iter::once(&e.global).chain(e.global_alt.as_ref()) {
            for (i, row) in table.chunks(e.n_g).enumerate() {
                check_simplex(row, 1e-12)
                    .map_err(|err| Error::invalid(format!("global kernel row {i}: {err}")))?;
            }
        }
        if e.reward.iter().any(|r| !r.is_finite()) || !e.reward_mu.is_finite() || !e.reward_nu.is_finite() {
            return Err(Error::invalid("rewards must be finite"));
        }
        let one_hot = |t: &Vec<f64>| t.iter().all(|&p| p == 0.0 || p == 1.0);
        let deterministic = one_hot(&e.global) && e.global_alt.as_ref().is_none_or(|alt| alt == &e.global);
        self.env.deterministic_global = e.n_g == 1 || deterministic;
        Ok(self.env)
    }
}

impl Environment for TabularEnv {
    fn local_state_count(&self) -> usize {
        self.n_x
    }

    fn action_count(&self) -> usize {
        self.n_u
    }

    fn global_kind(&self) -> GlobalKind {
        GlobalKind::Finite(self.n_g)
    }

    fn reward_bound(&self) -> f64 {
        let base = self.reward.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let m = base + self.reward_mu.abs() + self.reward_nu.abs();
        if m > 0.0 {
            m
        } else {
            // M must be positive even for the zero-reward model
            1.0
        }
    }

    fn local_transition(&self, x: usize, u: usize, mu: &[f64], g: GlobalState, _nu: &[f64]) -> Vec<f64> {
        let g = gidx(g);
        let base = Self::local_row(&self.local, self.n_x, self.n_u, g, x, u);
        match &self.local_alt {
            None => base.to_vec(),
            Some(alt) => {
                let w = mu[0];
                let alt = Self::local_row(alt, self.n_x, self.n_u, g, x, u);
                base.iter().zip(alt).map(|(b, a)| (1.0 - w) * b + w * a).collect()
            }
        }
    }

    fn global_transition(&self, _mu: &[f64], g: GlobalState, nu: &[f64]) -> Result<GlobalLaw> {
        let g = gidx(g);
        let row = &self.global[g * self.n_g..(g + 1) * self.n_g];
        let weights = match &self.global_alt {
            None => row.to_vec(),
            Some(alt) => {
                let w = nu[0];
                let alt = &alt[g * self.n_g..(g + 1) * self.n_g];
                row.iter().zip(alt).map(|(b, a)| (1.0 - w) * b + w * a).collect()
            }
        };
        Ok(GlobalLaw::over_indices(Simplex::from_convex(weights)))
    }

    fn reward(&self, x: usize, u: usize, mu: &[f64], g: GlobalState, nu: &[f64]) -> f64 {
        let g = gidx(g);
        self.reward[(g * self.n_x + x) * self.n_u + u] + self.reward_mu * mu[0] + self.reward_nu * nu[0]
    }

    fn global_is_deterministic(&self) -> bool {
        self.deterministic_global
    }
}
