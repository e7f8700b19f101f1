//! Firm-investment benchmark.
//!
//! `Q` quality levels, two actions (0 = hold, 1 = invest) and a scalar price
//! per unit quality `alpha` shared by every firm. Investing moves quality up by
//! `floor(chi * (Q - 1 - x) * (1 - mean / Q))` with `chi ~ U[0, 1]`, drawn
//! independently per firm and step. The next price is
//! `lambda0 * (1 - lambda1 * mean / Q)` and the reward is
//! `alpha * x - beta_r * mean - lambda_r * u`, where `mean` is the average
//! quality of the current population.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{Environment, GlobalKind, GlobalLaw, GlobalState};
use crate::error::{Error, Result};
use crate::simplex::mean_index;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirmParams {
    /// Number of quality levels.
    pub q: usize,
    pub lambda0: f64,
    pub lambda1: f64,
    pub beta_r: f64,
    pub lambda_r: f64,
}

impl Default for FirmParams {
    fn default() -> Self {
        FirmParams {
            q: 10,
            lambda0: 1.0,
            lambda1: 0.5,
            beta_r: 0.5,
            lambda_r: 0.5,
        }
    }
}

impl FirmParams {
    pub fn validate(&self) -> Result<()> {
        if self.q < 2 {
            return Err(Error::config("q", format!("needs at least 2 quality levels, got {}", self.q)));
        }
        if !(self.lambda0.is_finite() && self.lambda0 > 0.0) {
            return Err(Error::config("lambda0", format!("must be positive, got {}", self.lambda0)));
        }
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("beta_r", self.beta_r),
            ("lambda_r", self.lambda_r),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(name, format!("must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FirmEnv {
    params: FirmParams,
}

impl FirmEnv {
    pub fn new(params: FirmParams) -> Result<Self> {
        params.validate()?;
        Ok(FirmEnv { params })
    }

    pub fn params(&self) -> &FirmParams {
        &self.params
    }

    /// Price following a population with mean quality `mean`.
    pub fn next_price(&self, mean: f64) -> f64 {
        let p = &self.params;
        p.lambda0 * (1.0 - p.lambda1 * mean / p.q as f64)
    }

    /// Largest possible quality gain when investing at `x`.
    fn headroom(&self, x: usize, mean: f64) -> f64 {
        let q = self.params.q;
        let resistance = (1.0 - mean / q as f64).max(0.0);
        (q - 1 - x) as f64 * resistance
    }

    /// Next quality for a given uniform variate `chi`.
    pub fn advance(&self, x: usize, u: usize, mean: f64, chi: f64) -> usize {
        if u == 0 {
            return x;
        }
        let q = self.params.q;
        let gain = (chi * self.headroom(x, mean)).max(0.0).floor() as usize;
        (x + gain).min(q - 1)
    }

    fn price(g: GlobalState) -> f64 {
        match g {
            GlobalState::Scalar(a) => a,
            GlobalState::Index(i) => i as f64,
        }
    }
}

impl Environment for FirmEnv {
    fn local_state_count(&self) -> usize {
        self.params.q
    }

    fn action_count(&self) -> usize {
        2
    }

    fn global_kind(&self) -> GlobalKind {
        GlobalKind::Scalar
    }

    fn reward_bound(&self) -> f64 {
        let p = &self.params;
        let top = (p.q - 1) as f64;
        p.lambda0 * top + p.beta_r * top + p.lambda_r
    }

    fn local_transition(&self, x: usize, u: usize, mu: &[f64], _g: GlobalState, _nu: &[f64]) -> Vec<f64> {
        let mut dist = vec![0.0; self.params.q];
        if u == 0 {
            dist[x] = 1.0;
            return dist;
        }
        // floor(chi * a) = k  for chi in [k / a, (k + 1) / a)
        let a = self.headroom(x, mean_index(mu));
        if a <= 0.0 {
            dist[x] = 1.0;
            return dist;
        }
        let mut k = 0usize;
        while (k as f64) < a {
            let hi = ((k + 1) as f64).min(a);
            dist[(x + k).min(self.params.q - 1)] += (hi - k as f64) / a;
            k += 1;
        }
        dist
    }

    fn sample_local_transition(
        &self,
        x: usize,
        u: usize,
        mu: &[f64],
        _g: GlobalState,
        _nu: &[f64],
        rng: &mut dyn RngCore,
    ) -> usize {
        if u == 0 {
            return x;
        }
        let chi: f64 = rng.random();
        self.advance(x, u, mean_index(mu), chi)
    }

    fn global_transition(&self, mu: &[f64], _g: GlobalState, _nu: &[f64]) -> Result<GlobalLaw> {
        Ok(GlobalLaw::point_mass(GlobalState::Scalar(self.next_price(mean_index(mu)))))
    }

    fn sample_global_transition(
        &self,
        mu: &[f64],
        _g: GlobalState,
        _nu: &[f64],
        _rng: &mut dyn RngCore,
    ) -> Result<GlobalState> {
        Ok(GlobalState::Scalar(self.next_price(mean_index(mu))))
    }

    fn reward(&self, x: usize, u: usize, mu: &[f64], g: GlobalState, _nu: &[f64]) -> f64 {
        let p = &self.params;
        Self::price(g) * x as f64 - p.beta_r * mean_index(mu) - p.lambda_r * u as f64
    }

    fn global_is_deterministic(&self) -> bool {
        true
    }

    fn global_encoding_dim(&self) -> usize {
        1
    }

    fn encode_global(&self, g: GlobalState) -> Vec<f64> {
        vec![Self::price(g) / self.params.lambda0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{encode_global, global_transition_dist, global_transition_sample, local_transition_sample, reward};
    use crate::seeding::substream;
    use crate::simplex::check_simplex;
    use rand::Rng;

    fn fig_env() -> FirmEnv {
        FirmEnv::new(FirmParams::default()).unwrap()
    }

    /// Distribution over 0..q with the given mean quality.
    fn mu_with_mean(q: usize, mean: f64) -> Vec<f64> {
        let lo = mean.floor() as usize;
        let mut mu = vec![0.0; q];
        if lo + 1 >= q {
            mu[q - 1] = 1.0;
            return mu;
        }
        let frac = mean - lo as f64;
        mu[lo] = 1.0 - frac;
        mu[lo + 1] += frac;
        mu
    }

    #[test]
    fn construction() {
        let env = fig_env();
        assert_eq!(env.local_state_count(), 10);
        assert_eq!(env.action_count(), 2);
        assert_eq!(env.reward_bound(), 14.0);
        let small = FirmEnv::new(FirmParams { q: 2, ..FirmParams::default() }).unwrap();
        assert_eq!(small.local_state_count(), 2);
        assert!(FirmEnv::new(FirmParams { q: 1, ..FirmParams::default() }).is_err());
        assert!(FirmEnv::new(FirmParams { lambda0: 0.0, ..FirmParams::default() }).is_err());
        assert!(FirmEnv::new(FirmParams { beta_r: -1.0, ..FirmParams::default() }).is_err());
    }

    #[test]
    fn no_investment_keeps_quality() {
        let env = fig_env();
        let mut rng = substream(0, "firm", &[]);
        let mu = mu_with_mean(10, 3.3);
        for _ in 0..100 {
            let y = local_transition_sample(&env, 4, 0, &mu, GlobalState::Scalar(1.0), &[1.0, 0.0], &mut rng)
                .unwrap();
            assert_eq!(y, 4);
        }
    }

    #[test]
    fn top_quality_is_fixed_point() {
        let env = fig_env();
        let mut rng = substream(1, "firm", &[]);
        for mean in [0.0, 2.5, 9.0] {
            let mu = mu_with_mean(10, mean);
            let y = local_transition_sample(&env, 9, 1, &mu, GlobalState::Scalar(1.0), &[0.0, 1.0], &mut rng)
                .unwrap();
            assert_eq!(y, 9);
        }
    }

    #[test]
    fn price_update() {
        let env = fig_env();
        let mu = mu_with_mean(10, 5.0);
        let mut rng = substream(2, "firm", &[]);
        let g = global_transition_sample(&env, &mu, GlobalState::Scalar(1.0), &[0.5, 0.5], &mut rng).unwrap();
        assert!((g.scalar().unwrap() - 0.75).abs() < 1e-15);
        let mu0 = mu_with_mean(10, 0.0);
        let g = global_transition_sample(&env, &mu0, GlobalState::Scalar(0.3), &[0.5, 0.5], &mut rng).unwrap();
        assert_eq!(g, GlobalState::Scalar(1.0));
        let law = global_transition_dist(&env, &mu, GlobalState::Scalar(1.0), &[0.5, 0.5]).unwrap();
        assert_eq!(law.outcomes(), &[GlobalState::Scalar(0.75)]);
        assert_eq!(law.weights().as_slice(), &[1.0]);
    }

    #[test]
    fn reward_values() {
        let env = fig_env();
        let nu = [0.5, 0.5];
        let r = reward(&env, 4, 1, &mu_with_mean(10, 5.0), GlobalState::Scalar(0.75), &nu).unwrap();
        assert!(r.abs() < 1e-12, "{r}");
        let r = reward(&env, 0, 0, &mu_with_mean(10, 0.0), GlobalState::Scalar(1.0), &nu).unwrap();
        assert_eq!(r, 0.0);
        let alpha = 1.0 * (1.0 - 0.5 * 0.9);
        let r = reward(&env, 9, 0, &mu_with_mean(10, 9.0), GlobalState::Scalar(alpha), &nu).unwrap();
        assert!((r - 0.45).abs() < 1e-12, "{r}");
    }

    #[test]
    fn encoding_scales_by_lambda0() {
        let env = fig_env();
        assert_eq!(encode_global(&env, GlobalState::Scalar(0.75)).unwrap(), vec![0.75]);
        let env2 = FirmEnv::new(FirmParams { lambda0: 2.0, ..FirmParams::default() }).unwrap();
        assert_eq!(env2.encode_global(GlobalState::Scalar(1.0)), vec![0.5]);
        assert_eq!(env2.encode_global(GlobalState::Scalar(1.0)).len(), env2.global_encoding_dim());
    }

    #[test]
    fn monotone_and_closed() {
        let env = fig_env();
        for chi in [0.0, 0.5, 0.999] {
            for step in 0..=20 {
                let mean = step as f64 * 0.5;
                let mut prev_gain = usize::MAX;
                for x in 0..10 {
                    let y = env.advance(x, 1, mean, chi);
                    assert!(y >= x && y <= 9);
                    // gain shrinks as headroom shrinks
                    let gain = y - x;
                    assert!(gain <= prev_gain);
                    prev_gain = gain;
                }
            }
        }
        // means above Q are clamped rather than pushing quality down
        assert_eq!(env.advance(3, 1, 12.0, 0.9), 3);
    }

    #[test]
    fn kernel_matches_sampler() {
        let env = fig_env();
        let mut rng = substream(4, "firm-kernel", &[]);
        let mu = mu_with_mean(10, 3.7);
        let g = GlobalState::Scalar(0.8);
        let nu = [0.5, 0.5];
        for x in [0, 3, 8] {
            let dist = env.local_transition(x, 1, &mu, g, &nu);
            check_simplex(&dist, 1e-12).unwrap();
            let n = 50_000;
            let mut counts = [0usize; 10];
            for _ in 0..n {
                counts[env.sample_local_transition(x, 1, &mu, g, &nu, &mut rng)] += 1;
            }
            for y in 0..10 {
                let f = counts[y] as f64 / n as f64;
                let sd = (dist[y] * (1.0 - dist[y]) / n as f64).sqrt();
                assert!((f - dist[y]).abs() <= 4.0 * sd + 1e-12, "x={x} y={y}: {f} vs {}", dist[y]);
            }
        }
    }

    #[test]
    fn fuzzed_states_stay_in_range_and_rewards_bounded() {
        let env = fig_env();
        let m = env.reward_bound();
        let mut rng = substream(5, "firm-fuzz", &[]);
        for _ in 0..100_000 {
            let mut mu: Vec<f64> = (0..10).map(|_| rng.random::<f64>()).collect();
            let s: f64 = mu.iter().sum();
            mu.iter_mut().for_each(|v| *v /= s);
            let p: f64 = rng.random();
            let nu = [p, 1.0 - p];
            let x = rng.random_range(0..10);
            let u = rng.random_range(0..2);
            // reachable prices lie in [lambda0 * (1 - lambda1), lambda0]
            let alpha = 0.5 + 0.5 * rng.random::<f64>();
            let g = GlobalState::Scalar(alpha);
            let y = env.sample_local_transition(x, u, &mu, g, &nu, &mut rng);
            assert!(y < 10);
            assert!(env.reward(x, u, &mu, g, &nu).abs() <= m);
        }
    }
}
