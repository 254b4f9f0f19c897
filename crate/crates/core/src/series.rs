//! The first-stage output handed to the filter and the trend tests.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Estimated wave effects with their sampling covariance (or its diagonal).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrendSeries {
    pub beta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variances: Option<Vec<f64>>,
    /// Individual-transition count of the first-stage fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_transitions: Option<usize>,
}

impl TrendSeries {
    pub fn with_covariance(beta: Vec<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let rows = (0..cov.nrows()).map(|i| cov.row(i).iter().copied().collect()).collect();
        let s = Self { beta, cov: Some(rows), variances: None, n_transitions: None };
        s.validate()?;
        Ok(s)
    }

    pub fn with_variances(beta: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let s = Self { beta, cov: None, variances: Some(variances), n_transitions: None };
        s.validate()?;
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.beta.len();
        if t == 0 {
            return Err(Error::DataValidation("trend series is empty".into()));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::DataValidation("trend series contains non-finite values".into()));
        }
        match (&self.cov, &self.variances) {
            (Some(c), v) => {
                if c.len() != t || c.iter().any(|r| r.len() != t) {
                    return Err(Error::DataValidation(format!("covariance must be {t}x{t}")));
                }
                for i in 0..t {
                    if !(c[i][i] >= 0.0) || !c[i][i].is_finite() {
                        return Err(Error::DataValidation(format!("covariance diagonal {} is invalid", i + 1)));
                    }
                    for j in 0..i {
                        let (a, b) = (c[i][j], c[j][i]);
                        if !a.is_finite() || (a - b).abs() > 1e-10 * (1.0 + a.abs().max(b.abs())) {
                            return Err(Error::DataValidation("covariance must be finite and symmetric".into()));
                        }
                    }
                }
                if let Some(v) = v {
                    if v.len() != t || v.iter().zip(0..t).any(|(x, i)| (x - c[i][i]).abs() > 1e-12 * (1.0 + x.abs())) {
                        return Err(Error::DataValidation("variances disagree with the covariance diagonal".into()));
                    }
                }
            }
            (None, Some(v)) => {
                if v.len() != t {
                    return Err(Error::DataValidation(format!("expected {t} variances, found {}", v.len())));
                }
                if v.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                    return Err(Error::DataValidation("variances must be finite and non-negative".into()));
                }
            }
            (None, None) => {}
        }
        Ok(())
    }

    /// Diagonal measurement variances, if any were supplied.
    pub fn measurement_variances(&self) -> Option<Vec<f64>> {
        match (&self.cov, &self.variances) {
            (Some(c), _) => Some((0..c.len()).map(|i| c[i][i]).collect()),
            (None, Some(v)) => Some(v.clone()),
            _ => None,
        }
    }

    /// Full covariance, or the diagonal one implied by the variances.
    pub fn covariance_matrix(&self) -> Option<DMatrix<f64>> {
        let t = self.len();
        match (&self.cov, &self.variances) {
            (Some(c), _) => Some(DMatrix::from_fn(t, t, |i, j| c[i][j])),
            (None, Some(v)) => Some(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(v))),
            _ => None,
        }
    }
}
