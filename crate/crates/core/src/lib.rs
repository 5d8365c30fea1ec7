//! Predictive maintenance with Weibull remaining-useful-life prognostics.
//!
//! A neural network predicts Weibull `(scale, shape)` per sensor window. It
//! is first fitted by likelihood (estimate-then-optimize) and then fine-tuned
//! against downstream maintenance cost through a Gaussian-smoothed decision
//! loss (integrated estimation-optimization).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod data;
pub mod error;
pub mod experiments;
pub mod maintenance;
pub mod metrics;
pub mod model;
pub mod perturbation;
pub mod rng;
pub mod rul_dist;
pub mod surrogate;
pub mod trainer;

pub use error::{Error, Result};
