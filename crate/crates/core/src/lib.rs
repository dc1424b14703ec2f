//! Experimentation in discounted Bayesian decision problems.
//!
//! * [`model`]: finite decision problems, beliefs, JSON schema.
//! * [`belief`]: Bayes updates, myopic values, experimentation gaps and the
//!   `delta / (1 - delta)` bound on their expected sum.
//! * [`sim`]: seeded, worker-count independent Monte Carlo.
//! * [`constructions`]: families on which the bound is (nearly) attained.
//! * [`bandit`]: the three-outcome one-arm bandit and its cut-off.

// `!(x > 0.0)` style checks deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandit;
pub mod belief;
pub mod constructions;
pub mod error;
pub mod model;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
