//! Decision-theoretic assessment of uncertainty in clinical risk
//! prediction models.
//!
//! The crate fits logistic risk models on a development sample, draws
//! bootstrap (ordinary or Bayesian) posterior samples of the correct
//! model, and turns them into net benefit, expected value of perfect
//! information (EVPI), relative EVPI and decision-reversal risk.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod model;
pub mod netbenefit;
pub mod numeric;
mod parallel;
pub mod resample;
pub mod rng;
pub mod sweep;
pub mod synthetic;
pub mod validation;
pub mod voi;

pub use error::{Error, Result};
