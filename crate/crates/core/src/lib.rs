//! Mean-field control of many-agent systems with a shared global state.
//!
//! The crate provides the N-agent simulator, the infinite-population
//! dynamics, a softmax-linear policy class, a natural policy gradient
//! trainer, the closed-form error bounds and an experiment harness that
//! measures how the finite-population value approaches its limit.

pub mod bounds;
pub mod cli;
pub mod concentration;
pub mod env;
pub mod error;
pub mod estimate;
pub mod experiment;
pub mod meanfield;
pub mod nagent;
pub mod npg;
pub mod policy;
pub mod seeding;
pub mod simplex;

pub use error::{Error, Result};
