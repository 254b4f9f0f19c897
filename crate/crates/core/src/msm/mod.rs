//! Maximum-likelihood estimation of the misclassified 3-state panel model.

mod fit;
mod likelihood;

pub use fit::{default_start, extract_trend, fit_msm, fit_prepared, hessian_covariance, EstimationResult, FitConfig};
pub use likelihood::{forward_loglik, sequence_likelihood, PreparedPanel};
