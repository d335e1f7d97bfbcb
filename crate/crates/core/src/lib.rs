//! Imputation-aware tabular regression: missing-data strategies with
//! per-cell provenance, tree and linear regressors with native missing-value
//! routing, provenance-stamped Shapley and LIME explanations, and an
//! experiment harness comparing strategies on accuracy, explanation drift
//! and group fairness.

pub mod cli;
pub mod dataset;
pub mod explain;
pub mod impute;
pub mod linalg;
pub mod model;
pub mod harness;
pub mod sim;
