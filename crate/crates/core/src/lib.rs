//! Two-step incidence-trend estimation: a hidden 3-state Markov panel model
//! whose wave effects feed a variance-constrained Kalman filter.

pub mod analysis;
pub mod error;
pub mod kalman;
pub mod markov;
pub mod msm;
pub mod optim;
pub mod panel;
pub mod rng;
pub mod series;
pub mod sim;
pub mod trend;

pub use error::{Error, Result};
