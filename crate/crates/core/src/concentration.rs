//! Monte-Carlo check of the centred-sum concentration inequality
//! `sum_m E|sum_n (X_mn - E X_mn)| <= sqrt(M N)` for families of `[0, 1]`
//! variables that are independent along `n` and satisfy
//! `sum_m E[X_mn] <= 1` for every `n`.

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::estimate::ValueEstimate;

/// How the rows of one column are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    /// Every entry is an independent Bernoulli.
    Independent,
    /// Each column is one-hot (or all zero) with the column probabilities,
    /// as for state indicators of one agent.
    Categorical,
}

/// A family of Bernoulli means `p[m][n]`.
#[derive(Debug, Clone)]
pub struct BernoulliFamily {
    means: Vec<Vec<f64>>,
    coupling: Coupling,
}

impl BernoulliFamily {
    pub fn new(means: Vec<Vec<f64>>, coupling: Coupling) -> Result<Self> {
        let cols = means.first().map(Vec::len).unwrap_or(0);
        if means.is_empty() || cols == 0 || means.iter().any(|r| r.len() != cols) {
            return Err(Error::arg("means must be a non-empty rectangular matrix"));
        }
        if means.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::arg("means must lie in [0, 1]"));
        }
        for n in 0..cols {
            let s: f64 = means.iter().map(|r| r[n]).sum();
            if s > 1.0 + 1e-12 {
                return Err(Error::arg(format!("column {n} has total mean {s} > 1")));
            }
        }
        Ok(BernoulliFamily { means, coupling })
    }

    /// Random family with `rows x cols` entries; columns sum to at most one.
    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, coupling: Coupling, rng: &mut R) -> Self {
        let mut means = vec![vec![0.0; cols]; rows];
        for n in 0..cols {
            let raw: Vec<f64> = (0..=rows).map(|_| rng.random::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            // the extra slot absorbs mass so columns need not sum to one
            for m in 0..rows {
                means[m][n] = raw[m] / total;
            }
        }
        BernoulliFamily { means, coupling }
    }

    pub fn rows(&self) -> usize {
        self.means.len()
    }

    pub fn cols(&self) -> usize {
        self.means[0].len()
    }

    pub fn bound(&self) -> f64 {
        ((self.rows() * self.cols()) as f64).sqrt()
    }

    /// One draw of `sum_m |sum_n (X_mn - p_mn)|`.
    pub fn sample_deviation(&self, rng: &mut dyn RngCore) -> f64 {
        let (rows, cols) = (self.rows(), self.cols());
        let mut centred = vec![0.0; rows];
        for n in 0..cols {
            match self.coupling {
                Coupling::Independent => {
                    for m in 0..rows {
                        let p = self.means[m][n];
                        let x = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
                        centred[m] += x - p;
                    }
                }
                Coupling::Categorical => {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut hit = None;
                    for m in 0..rows {
                        acc += self.means[m][n];
                        if hit.is_none() && u < acc {
                            hit = Some(m);
                        }
                        centred[m] -= self.means[m][n];
                    }
                    if let Some(m) = hit {
                        centred[m] += 1.0;
                    }
                }
            }
        }
        centred.iter().map(|c| c.abs()).sum()
    }

    /// Mean and standard error of the deviation over `trials` draws.
    pub fn estimate(&self, trials: usize, rng: &mut dyn RngCore) -> ValueEstimate {
        let draws: Vec<f64> = (0..trials).map(|_| self.sample_deviation(rng)).collect();
        ValueEstimate::from_returns(&draws, 1, 0.0)
    }
}
