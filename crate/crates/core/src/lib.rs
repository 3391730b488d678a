//! Counterfactual treatment-disparity auditing and mitigation for structural causal models.

pub mod data;
pub mod error;
pub mod estimators;
pub mod expr;
pub mod metrics;
pub mod mitigation;
pub mod noise;
pub mod predictors;
pub mod schema;
pub mod scm;
pub mod synth;

pub use error::{Error, Result};
