//! Probability vectors over finite sets.
//!
//! State distributions (over local states), action distributions (over
//! actions) and global-state laws all share the same representation: a
//! non-negative vector that sums to one.

use std::ops::Index;

use crate::error::{Error, Result};

/// Tolerance used when accepting externally supplied probability vectors.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A validated probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Simplex(Vec<f64>);

/// Distribution of local states across the population.
pub type StateDistribution = Simplex;
/// Distribution of actions across the population.
pub type ActionDistribution = Simplex;

impl Simplex {
    /// Validates `weights` against [`SIMPLEX_TOL`].
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        check_simplex(&weights, SIMPLEX_TOL)?;
        Ok(Simplex(weights))
    }

    /// Wraps a vector produced by a convex combination of simplexes.
    ///
    /// Only checked in debug builds.
    pub(crate) fn from_convex(weights: Vec<f64>) -> Self {
        debug_assert!(check_simplex(&weights, 1e-8).is_ok(), "{weights:?}");
        Simplex(weights)
    }

    pub fn point_mass(len: usize, at: usize) -> Result<Self> {
        if at >= len {
            return Err(Error::arg(format!("point mass at {at} outside support of size {len}")));
        }
        let mut w = vec![0.0; len];
        w[at] = 1.0;
        Ok(Simplex(w))
    }

    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::arg("uniform distribution over an empty set"));
        }
        Ok(Simplex(vec![1.0 / len as f64; len]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Mean of the index under this distribution, `sum_k k * w[k]`.
    pub fn mean_index(&self) -> f64 {
        mean_index(&self.0)
    }

    pub fn l1_distance(&self, other: &Simplex) -> f64 {
        l1_distance(&self.0, &other.0)
    }
}

impl Index<usize> for Simplex {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl AsRef<[f64]> for Simplex {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Checks non-negativity and unit mass within `tol`.
pub fn check_simplex(w: &[f64], tol: f64) -> Result<()> {
    if w.is_empty() {
        return Err(Error::invalid("empty probability vector"));
    }
    let mut sum = 0.0;
    for (i, &p) in w.iter().enumerate() {
        if !p.is_finite() || p < -tol {
            return Err(Error::invalid(format!("entry {i} = {p} is not a probability")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > tol {
        return Err(Error::invalid(format!("entries sum to {sum}, not 1")));
    }
    Ok(())
}

pub fn mean_index(w: &[f64]) -> f64 {
    w.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}
