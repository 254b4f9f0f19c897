//! Drift t-statistics and the joint F-statistic.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TStatistics {
    pub t_nu: f64,
    pub t_sd: f64,
    pub t_s: f64,
}

/// `t_ν`, the detrended `t_s,d` and the plain `t_s` for scale `sigma`.
pub fn t_statistics(beta: &[f64], sigma: f64) -> Result<TStatistics> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {sigma}")));
    }
    let t = beta.len();
    if t < 2 {
        return Err(Error::InvalidArgument("need at least two coefficients".into()));
    }
    let tf = t as f64;
    let span = beta[t - 1] - beta[0];
    let t_nu = span / (tf.sqrt() * sigma);
    let norm = 1.0 / (tf * tf * sigma * sigma);
    let mut sd = 0.0;
    let mut s = 0.0;
    for (i, b) in beta.iter().enumerate() {
        let k = (i + 1) as f64;
        let dev = b - beta[0];
        sd += (dev - k / tf * span).powi(2);
        s += dev * dev;
    }
    Ok(TStatistics { t_nu, t_sd: norm * sd, t_s: norm * s })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FStatistic {
    pub statistic: f64,
    pub df1: usize,
    /// `n - T - 2`; absent when not positive or `n` unknown.
    pub df2: Option<usize>,
    pub p_chi2: f64,
    pub p_f: Option<f64>,
    pub pseudo_inverse: bool,
}

/// `βᵀ Σ⁻¹ β / T` with p-values under `χ²_{T-1}` and `F(T-1, n-T-2)`.
pub fn f_statistic(beta: &[f64], cov: &DMatrix<f64>, n: Option<usize>) -> Result<FStatistic> {
    let t = beta.len();
    if t < 2 || cov.nrows() != t || cov.ncols() != t {
        return Err(Error::InvalidArgument(format!("need T >= 2 and a {t}x{t} covariance")));
    }
    let b = DVector::from_column_slice(beta);
    let (quad, pseudo_inverse) = match cov.clone().cholesky() {
        Some(ch) => (b.dot(&ch.solve(&b)), false),
        None => {
            log::warn!("trend covariance is singular; F-statistic uses a pseudo-inverse");
            let eig = SymmetricEigen::new(0.5 * (cov + cov.transpose()));
            let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mut q = 0.0;
            for (k, &lam) in eig.eigenvalues.iter().enumerate() {
                if lam > 1e-10 * scale {
                    q += eig.eigenvectors.column(k).dot(&b).powi(2) / lam;
                }
            }
            (q, true)
        }
    };
    let statistic = quad / t as f64;
    let df1 = t - 1;
    let p_chi2 = ChiSquared::new(df1 as f64).map_err(|e| Error::Numeric(e.to_string()))?.sf(statistic);
    let df2 = n.and_then(|n| n.checked_sub(t + 2)).filter(|&d| d > 0);
    let p_f = match df2 {
        Some(d2) => Some(FisherSnedecor::new(df1 as f64, d2 as f64).map_err(|e| Error::Numeric(e.to_string()))?.sf(statistic)),
        None => None,
    };
    Ok(FStatistic { statistic, df1, df2, p_chi2, p_f, pseudo_inverse })
}
