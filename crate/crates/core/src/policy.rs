//! Softmax-linear policies over features of `(x, mu, g)`.
//!
//! The feature vector is `one_hot(x) ++ mu ++ encode(g) ++ [1]`; action `a`
//! gets logit `theta[a] . features`. Weights are kept inside
//! `[-weight_cap, weight_cap]`, which makes the policy Lipschitz in `mu` with
//! the constant returned by [`PolicyParams::lipschitz_constant`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::simplex::Simplex;

pub const DEFAULT_WEIGHT_CAP: f64 = 10.0;

/// A stationary randomized policy `pi(x, mu, g)`.
pub trait Policy: Send + Sync {
    fn action_count(&self) -> usize;

    /// Action probabilities at local state `x`, population `mu` and encoded
    /// global state `g_enc`.
    fn action_probs(&self, x: usize, mu: &[f64], g_enc: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Parameters of a softmax-linear policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    state_count: usize,
    action_count: usize,
    global_dim: usize,
    weight_cap: f64,
    /// Row-major `action_count x feature_dim`.
    theta: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(state_count: usize, action_count: usize, global_dim: usize, weight_cap: f64) -> Result<Self> {
        if state_count == 0 || action_count == 0 {
            return Err(Error::arg("policy needs at least one state and one action"));
        }
        if !(weight_cap.is_finite() && weight_cap > 0.0) {
            return Err(Error::arg(format!("weight cap must be positive, got {weight_cap}")));
        }
        let fd = 2 * state_count + global_dim + 1;
        Ok(PolicyParams {
            state_count,
            action_count,
            global_dim,
            weight_cap,
            theta: vec![0.0; action_count * fd],
        })
    }

    /// Zero policy shaped for `env`.
    pub fn for_env(env: &dyn Environment, weight_cap: f64) -> Result<Self> {
        Self::zeros(env.local_state_count(), env.action_count(), env.global_encoding_dim(), weight_cap)
    }

    /// Entries drawn uniformly from `[-scale, scale]`, then clipped.
    pub fn random<R: Rng + ?Sized>(env: &dyn Environment, weight_cap: f64, scale: f64, rng: &mut R) -> Result<Self> {
        let mut p = Self::for_env(env, weight_cap)?;
        if scale > 0.0 {
            p.theta.iter_mut().for_each(|t| *t = rng.random_range(-scale..=scale));
        }
        Ok(p.clip_weights())
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != self.theta.len() {
            return Err(Error::arg(format!(
                "theta has {} entries, expected {}",
                theta.len(),
                self.theta.len()
            )));
        }
        let p = PolicyParams { theta, ..self.clone() };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.action_count * self.feature_dim();
        if self.theta.len() != expected {
            return Err(Error::invalid(format!(
                "theta has {} entries, expected {expected}",
                self.theta.len()
            )));
        }
        if let Some((i, t)) = self
            .theta
            .iter()
            .enumerate()
            .find(|(_, t)| !t.is_finite() || t.abs() > self.weight_cap)
        {
            return Err(Error::invalid(format!(
                "theta[{i}] = {t} violates the weight cap {}",
                self.weight_cap
            )));
        }
        Ok(())
    }

    /// Checks that the shapes agree with `env`.
    pub fn check_env(&self, env: &dyn Environment) -> Result<()> {
        if self.state_count != env.local_state_count()
            || self.action_count != env.action_count()
            || self.global_dim != env.global_encoding_dim()
        {
            return Err(Error::arg(format!(
                "policy shape (|X|={}, |U|={}, g_dim={}) does not match environment (|X|={}, |U|={}, g_dim={})",
                self.state_count,
                self.action_count,
                self.global_dim,
                env.local_state_count(),
                env.action_count(),
                env.global_encoding_dim()
            )));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        2 * self.state_count + self.global_dim + 1
    }

    /// Number of parameters `d`.
    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn weight_cap(&self) -> f64 {
        self.weight_cap
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn global_dim(&self) -> usize {
        self.global_dim
    }

    pub fn features(&self, x: usize, mu: &[f64], g_enc: &[f64]) -> Result<FeatureVector> {
        if x >= self.state_count {
            return Err(Error::arg(format!("local state {x} outside 0..{}", self.state_count)));
        }
        if mu.len() != self.state_count {
            return Err(Error::arg(format!(
                "state distribution has length {}, expected {}",
                mu.len(),
                self.state_count
            )));
        }
        if g_enc.len() != self.global_dim {
            return Err(Error::arg(format!(
                "global encoding has length {}, expected {}",
                g_enc.len(),
                self.global_dim
            )));
        }
        Ok(FeatureVector(self.features_unchecked(x, mu, g_enc)))
    }

    fn features_unchecked(&self, x: usize, mu: &[f64], g_enc: &[f64]) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.feature_dim());
        f.extend((0..self.state_count).map(|k| if k == x { 1.0 } else { 0.0 }));
        f.extend_from_slice(mu);
        f.extend_from_slice(g_enc);
        f.push(1.0);
        f
    }

    fn softmax(&self, features: &[f64]) -> Vec<f64> {
        let fd = self.feature_dim();
        let logits: Vec<f64> = self
            .theta
            .chunks(fd)
            .map(|row| row.iter().zip(features).map(|(w, f)| w * f).sum())
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        p
    }

    pub fn action_dist(&self, x: usize, mu: &[f64], g_enc: &[f64]) -> Result<Simplex> {
        let f = self.features(x, mu, g_enc)?;
        let p = self.softmax(&f.0);
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite action probabilities at x={x}")));
        }
        Ok(Simplex::from_convex(p))
    }

    /// Score `grad_theta log pi(u | x, mu, g)`, laid out like `theta`.
    pub fn log_prob_grad(&self, x: usize, mu: &[f64], g_enc: &[f64], u: usize) -> Result<Vec<f64>> {
        if u >= self.action_count {
            return Err(Error::arg(format!("action {u} outside 0..{}", self.action_count)));
        }
        let f = self.features(x, mu, g_enc)?;
        let p = self.softmax(&f.0);
        let mut grad = Vec::with_capacity(self.dim());
        for (a, pa) in p.iter().enumerate() {
            let coef = if a == u { 1.0 - pa } else { -pa };
            grad.extend(f.0.iter().map(|v| coef * v));
        }
        Ok(grad)
    }

    /// Bound on `|pi(x, mu1, g) - pi(x, mu2, g)|_1 / |mu1 - mu2|_1`.
    ///
    /// The softmax moves at most half the spread of a logit perturbation in
    /// L1, and a zero-sum `delta_mu` moves the logit gap between actions `a`
    /// and `b` by at most half the spread of `theta[a] - theta[b]` over the
    /// distribution block times `|delta_mu|_1`. Hence
    /// `L_Q = max_{a,b} spread(theta[a, mu] - theta[b, mu]) / 4`, which never
    /// exceeds `weight_cap`.
    pub fn lipschitz_constant(&self) -> f64 {
        let fd = self.feature_dim();
        let block = self.state_count..2 * self.state_count;
        let rows: Vec<&[f64]> = self.theta.chunks(fd).map(|r| &r[block.clone()]).collect();
        let mut best = 0.0f64;
        for a in 0..rows.len() {
            for b in (a + 1)..rows.len() {
                let (lo, hi) = rows[a]
                    .iter()
                    .zip(rows[b])
                    .map(|(p, q)| p - q)
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
                best = best.max(hi - lo);
            }
        }
        best / 4.0
    }

    pub fn clip_weights(&self) -> Self {
        let cap = self.weight_cap;
        PolicyParams {
            theta: self.theta.iter().map(|t| t.clamp(-cap, cap)).collect(),
            ..self.clone()
        }
    }

    /// `clip(theta + eta * w)`.
    pub fn step(&self, w: &[f64], eta: f64) -> Result<Self> {
        if w.len() != self.dim() {
            return Err(Error::arg(format!("update has {} entries, expected {}", w.len(), self.dim())));
        }
        let theta = self.theta.iter().zip(w).map(|(t, d)| t + eta * d).collect();
        Ok(PolicyParams { theta, ..self.clone() }.clip_weights())
    }
}

impl Policy for PolicyParams {
    fn action_count(&self) -> usize {
        self.action_count
    }

    fn action_probs(&self, x: usize, mu: &[f64], g_enc: &[f64]) -> Vec<f64> {
        self.softmax(&self.features_unchecked(x, mu, g_enc))
    }
}

/// Fixed action distribution per local state, ignoring `mu` and `g`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    rows: Vec<Vec<f64>>,
}

impl TabularPolicy {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_u = rows.first().map(Vec::len).unwrap_or(0);
        for (x, row) in rows.iter().enumerate() {
            if row.len() != n_u {
                return Err(Error::arg(format!("row {x} has {} actions, expected {n_u}", row.len())));
            }
            Simplex::new(row.clone()).map_err(|e| Error::invalid(format!("row {x}: {e}")))?;
        }
        if rows.is_empty() {
            return Err(Error::arg("tabular policy needs at least one state"));
        }
        Ok(TabularPolicy { rows })
    }

    pub fn uniform(n_x: usize, n_u: usize) -> Self {
        TabularPolicy {
            rows: vec![vec![1.0 / n_u as f64; n_u]; n_x],
        }
    }

    /// Always plays `action`.
    pub fn constant(n_x: usize, n_u: usize, action: usize) -> Self {
        let mut row = vec![0.0; n_u];
        row[action] = 1.0;
        TabularPolicy { rows: vec![row; n_x] }
    }
}

impl Policy for TabularPolicy {
    fn action_count(&self) -> usize {
        self.rows[0].len()
    }

    fn action_probs(&self, x: usize, _mu: &[f64], _g_enc: &[f64]) -> Vec<f64> {
        self.rows[x].clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::substream;
    use crate::simplex::{check_simplex, l1_distance};
    use proptest::prelude::*;
    use rand::Rng;

    fn random_simplex<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().ln()).collect();
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|p| *p /= s);
        v
    }

    fn random_params<R: Rng>(n_x: usize, n_u: usize, g_dim: usize, rng: &mut R) -> PolicyParams {
        let p = PolicyParams::zeros(n_x, n_u, g_dim, 10.0).unwrap();
        let theta = (0..p.dim()).map(|_| rng.random_range(-3.0..3.0)).collect();
        p.with_theta(theta).unwrap()
    }

    #[test]
    fn feature_layout() {
        let p = PolicyParams::zeros(2, 2, 1, 10.0).unwrap();
        let f = p.features(0, &[1.0, 0.0], &[0.5]).unwrap();
        assert_eq!(f.as_slice(), &[1.0, 0.0, 1.0, 0.0, 0.5, 1.0]);
        assert_eq!(f.as_slice().len(), p.feature_dim());
        assert!(p.features(2, &[1.0, 0.0], &[0.5]).is_err());
        assert!(p.features(0, &[1.0], &[0.5]).is_err());
        assert!(p.features(0, &[1.0, 0.0], &[]).is_err());
    }

    #[test]
    fn zero_weights_are_uniform() {
        let p = PolicyParams::zeros(3, 4, 2, 10.0).unwrap();
        let d = p.action_dist(1, &[0.2, 0.3, 0.5], &[0.0, 1.0]).unwrap();
        for &v in d.as_slice() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let single = PolicyParams::zeros(3, 1, 0, 10.0).unwrap();
        assert_eq!(single.action_dist(0, &[1.0, 0.0, 0.0], &[]).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn shift_invariance() {
        let mut rng = substream(0, "shift", &[]);
        let p = random_params(3, 3, 1, &mut rng);
        let fd = p.feature_dim();
        // adding c to the bias weight of every row adds c to every logit
        let mut theta = p.theta().to_vec();
        for a in 0..3 {
            theta[a * fd + fd - 1] += 1.7;
        }
        let shifted = PolicyParams { theta, weight_cap: 100.0, ..p.clone() };
        let mu = [0.1, 0.6, 0.3];
        let d1 = p.action_dist(2, &mu, &[0.4]).unwrap();
        let d2 = shifted.action_dist(2, &mu, &[0.4]).unwrap();
        assert!(l1_distance(d1.as_slice(), d2.as_slice()) < 1e-12);
    }

    #[test]
    fn single_action_score_is_zero() {
        let p = PolicyParams::zeros(2, 1, 1, 10.0).unwrap();
        let g = p.log_prob_grad(1, &[0.5, 0.5], &[0.3], 0).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn score_matches_central_differences() {
        let mut rng = substream(1, "fd", &[]);
        let h = 1e-5;
        for _ in 0..100 {
            let (n_x, n_u) = (rng.random_range(1..4), rng.random_range(1..4));
            let p = random_params(n_x, n_u, 2, &mut rng);
            let mu = random_simplex(n_x, &mut rng);
            let g = [rng.random::<f64>(), rng.random::<f64>()];
            let x = rng.random_range(0..n_x);
            let u = rng.random_range(0..n_u);
            let grad = p.log_prob_grad(x, &mu, &g, u).unwrap();
            let logp = |theta: &[f64]| {
                let q = PolicyParams { theta: theta.to_vec(), ..p.clone() };
                q.action_probs(x, &mu, &g)[u].ln()
            };
            for k in 0..p.dim() {
                let mut plus = p.theta().to_vec();
                let mut minus = p.theta().to_vec();
                plus[k] += h;
                minus[k] -= h;
                let fd = (logp(&plus) - logp(&minus)) / (2.0 * h);
                let denom = grad[k].abs().max(fd.abs()).max(1e-8);
                assert!((grad[k] - fd).abs() / denom < 1e-4 || (grad[k] - fd).abs() < 1e-9, "k={k}: {} vs {fd}", grad[k]);
            }
        }
    }

    #[test]
    fn lipschitz_zero_and_homogeneous() {
        let p = PolicyParams::zeros(3, 2, 1, 10.0).unwrap();
        assert_eq!(p.lipschitz_constant(), 0.0);
        let mut rng = substream(2, "lq", &[]);
        let q = random_params(3, 3, 1, &mut rng);
        let fd = q.feature_dim();
        let base = q.lipschitz_constant();
        for k in [0.0, 0.5, 2.0] {
            let mut theta = q.theta().to_vec();
            for a in 0..3 {
                for j in 3..6 {
                    theta[a * fd + j] *= k;
                }
            }
            let scaled = PolicyParams { theta, weight_cap: 100.0, ..q.clone() };
            assert!((scaled.lipschitz_constant() - k * base).abs() < 1e-12);
        }
        assert!(q.lipschitz_constant() <= q.weight_cap());
    }

    #[test]
    fn lipschitz_bound_holds_on_random_pairs() {
        let mut rng = substream(3, "lq-fuzz", &[]);
        for _ in 0..10_000 {
            let (n_x, n_u) = (rng.random_range(1..5), rng.random_range(1..4));
            let p = random_params(n_x, n_u, 1, &mut rng);
            let l_q = p.lipschitz_constant();
            let mu1 = random_simplex(n_x, &mut rng);
            let mu2 = random_simplex(n_x, &mut rng);
            let g = [rng.random::<f64>()];
            let x = rng.random_range(0..n_x);
            let d = l1_distance(&p.action_probs(x, &mu1, &g), &p.action_probs(x, &mu2, &g));
            assert!(d <= l_q * l1_distance(&mu1, &mu2) + 1e-12, "{d} > {l_q} * |dmu|");
        }
    }

    #[test]
    fn clip_behaviour() {
        let p = PolicyParams::zeros(1, 2, 0, 2.0).unwrap();
        let fd = p.feature_dim();
        let inside: Vec<f64> = (0..p.dim()).map(|i| i as f64 * 0.1).collect();
        let p_in = p.with_theta(inside.clone()).unwrap();
        assert_eq!(p_in.clip_weights(), p_in);
        let mut over = PolicyParams { theta: vec![4.0; 2 * fd], ..p.clone() };
        over.theta[0] = -7.0;
        let c = over.clip_weights();
        assert!(c.theta().iter().all(|t| t.abs() <= 2.0));
        assert_eq!(c.theta()[0], -2.0);
        assert_eq!(c.theta()[1], 2.0);
        assert_eq!(c.clip_weights(), c);
        assert!(p.with_theta(vec![4.0; 2 * fd]).is_err());
    }

    #[test]
    fn empirical_fisher_is_psd() {
        let mut rng = substream(4, "fisher", &[]);
        let p = random_params(3, 3, 1, &mut rng);
        let d = p.dim();
        let mut fisher = nalgebra::DMatrix::<f64>::zeros(d, d);
        let samples = 2000;
        for _ in 0..samples {
            let mu = random_simplex(3, &mut rng);
            let g = [rng.random::<f64>()];
            let x = rng.random_range(0..3);
            let probs = p.action_probs(x, &mu, &g);
            let u = crate::seeding::sample_categorical(&probs, &mut rng);
            let s = nalgebra::DVector::from_vec(p.log_prob_grad(x, &mu, &g, u).unwrap());
            fisher += &s * s.transpose();
        }
        fisher /= samples as f64;
        assert!((&fisher - fisher.transpose()).amax() < 1e-12);
        let min_eig = fisher.symmetric_eigen().eigenvalues.min();
        assert!(min_eig >= -1e-8, "{min_eig}");
    }

    proptest! {
        #[test]
        fn action_dist_on_simplex(seed in any::<u64>(), x in 0usize..4, scale in 0.0f64..10.0) {
            let mut rng = substream(seed, "pt", &[]);
            let p = PolicyParams::zeros(4, 3, 2, 10.0).unwrap();
            let theta = (0..p.dim()).map(|_| rng.random_range(-scale..=scale)).collect();
            let p = p.with_theta(theta).unwrap();
            let mu = random_simplex(4, &mut rng);
            let d = p.action_dist(x, &mu, &[0.3, 0.7]).unwrap();
            check_simplex(d.as_slice(), 1e-12).unwrap();
            prop_assert!(d.as_slice().iter().all(|&v| v > 0.0));
        }

        #[test]
        fn score_identity(seed in any::<u64>(), x in 0usize..3) {
            let mut rng = substream(seed, "score", &[]);
            let p = random_params(3, 4, 1, &mut rng);
            let mu = random_simplex(3, &mut rng);
            let g = [rng.random::<f64>()];
            let probs = p.action_probs(x, &mu, &g);
            let mut acc = vec![0.0; p.dim()];
            for (u, pu) in probs.iter().enumerate() {
                for (a, s) in acc.iter_mut().zip(p.log_prob_grad(x, &mu, &g, u).unwrap()) {
                    *a += pu * s;
                }
            }
            prop_assert!(acc.iter().all(|v| v.abs() < 1e-10));
        }
    }
}
