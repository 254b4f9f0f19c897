//! Demeaned-difference transform and the two long-run variance estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `Δβ_k - mean(Δβ)` for `k = 2..T`, with the linear map that produces it
/// and the implied covariance.
#[derive(Debug, Clone)]
pub struct DemeanedDiffSeries {
    pub values: Vec<f64>,
    /// `(T-1) x T`.
    pub psi: DMatrix<f64>,
    /// `Ψ Σ Ψᵀ`, when a covariance was supplied.
    pub omega: Option<DMatrix<f64>>,
}

/// Builds `Ψ` explicitly and applies it.
pub fn demean_diff_transform(beta: &[f64], cov: Option<&DMatrix<f64>>) -> Result<DemeanedDiffSeries> {
    let t = beta.len();
    if t < 3 {
        return Err(Error::InvalidArgument(format!("demeaned differences need T >= 3, got {t}")));
    }
    let n = t - 1;
    let mut psi = DMatrix::<f64>::zeros(n, t);
    // row r is e_{r+1} - e_r minus the mean difference (β_T - β_1)/(T-1)
    for r in 0..n {
        psi[(r, r + 1)] += 1.0;
        psi[(r, r)] -= 1.0;
        psi[(r, t - 1)] -= 1.0 / n as f64;
        psi[(r, 0)] += 1.0 / n as f64;
    }
    let values = (&psi * DVector::from_column_slice(beta)).iter().copied().collect();
    let omega = match cov {
        Some(c) => {
            if c.nrows() != t || c.ncols() != t {
                return Err(Error::InvalidArgument(format!("covariance is {}x{}, expected {t}x{t}", c.nrows(), c.ncols())));
            }
            let o = &psi * c * psi.transpose();
            Some(0.5 * (&o + o.transpose()))
        }
        None => None,
    };
    Ok(DemeanedDiffSeries { values, psi, omega })
}

/// Bartlett kernel weight `1 - τ/(m+1)`.
pub fn bartlett(tau: usize, m: usize) -> f64 {
    1.0 - tau as f64 / (m + 1) as f64
}

/// Estimate plus a flag for the finite-sample negative case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate {
    pub value: f64,
    pub negative: bool,
}

fn flagged(value: f64, what: &str) -> VarianceEstimate {
    let negative = value < 0.0;
    if negative {
        log::warn!("{what} estimate is negative ({value})");
    }
    VarianceEstimate { value, negative }
}

/// Autocovariance at `tau` of an already-demeaned series, divisor `n`.
pub fn autocovariance(x: &[f64], tau: usize) -> f64 {
    let n = x.len();
    (tau..n).map(|k| x[k] * x[k - tau]).sum::<f64>() / n as f64
}

/// `γ(0) + 2 Σ_{τ≤m} w(τ,m) γ(τ)`. The series is taken as demeaned, as the
/// transform output is.
pub fn long_run_variance(x: &[f64], m: usize, kernel: fn(usize, usize) -> f64) -> Result<VarianceEstimate> {
    if m >= x.len() {
        return Err(Error::InvalidArgument(format!("lag {m} not below series length {}", x.len())));
    }
    let mut v = autocovariance(x, 0);
    for tau in 1..=m {
        v += 2.0 * kernel(tau, m) * autocovariance(x, tau);
    }
    Ok(flagged(v, "long-run variance"))
}

/// Kernel-weighted average of the diagonal and first `m` sub-diagonals of
/// `ω`, each divided by the dimension. Off-diagonal terms enter once unless
/// `double_offdiag` is set, which matches the factor 2 of the long-run form.
pub fn hac_variance(
    omega: &DMatrix<f64>,
    m: usize,
    kernel: fn(usize, usize) -> f64,
    double_offdiag: bool,
) -> Result<VarianceEstimate> {
    let n = omega.nrows();
    if omega.ncols() != n {
        return Err(Error::InvalidArgument(format!("omega is {}x{}, not square", n, omega.ncols())));
    }
    if m >= n {
        return Err(Error::InvalidArgument(format!("lag {m} not below dimension {n}")));
    }
    let nf = n as f64;
    let diag: f64 = (0..n).map(|k| omega[(k, k)]).sum::<f64>() / nf;
    let mut off = 0.0;
    for tau in 1..=m {
        let w = kernel(tau, m);
        off += w * (tau..n).map(|k| omega[(k, k - tau)]).sum::<f64>();
    }
    let factor = if double_offdiag { 2.0 } else { 1.0 };
    Ok(flagged(diag + factor * off / nf, "HAC variance"))
}
