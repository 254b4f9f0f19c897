//! Residual diagnostics and information criteria for a fitted filter.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::filter::FilterOutput;

/// `-2ℓ + p ln T`.
pub fn bic(loglik: f64, n_params: usize, t: usize) -> f64 {
    -2.0 * loglik + n_params as f64 * (t as f64).ln()
}

/// Sample autocorrelation at `lag` with the usual full-sample denominator.
/// A constant series has all autocorrelations set to zero.
pub fn autocorrelation(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    if lag >= n {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let denom: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if denom <= 0.0 {
        return 0.0;
    }
    let num: f64 = (lag..n).map(|i| (x[i] - mean) * (x[i - lag] - mean)).sum();
    num / denom
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestStat {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Ljung-Box portmanteau statistic over lags 1..=m; `None` when fewer than
/// `m + 1` residuals.
pub fn ljung_box(resid: &[f64], m: usize) -> Option<TestStat> {
    let n = resid.len();
    if m == 0 || n <= m {
        return None;
    }
    let nf = n as f64;
    let q = nf * (nf + 2.0) * (1..=m).map(|tau| autocorrelation(resid, tau).powi(2) / (nf - tau as f64)).sum::<f64>();
    Some(TestStat { statistic: q, df: m, p_value: chi2_sf(q, m) })
}

/// Bowman-Shenton normality statistic `n(S²/6 + K²/24)` with `K` the excess
/// kurtosis. Returns the statistic and whether moments were degenerate.
pub fn bowman_shenton(resid: &[f64]) -> Option<(TestStat, bool)> {
    let n = resid.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mean = resid.iter().sum::<f64>() / nf;
    let m2 = resid.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
    if m2 <= 0.0 {
        return Some((TestStat { statistic: 0.0, df: 2, p_value: 1.0 }, true));
    }
    let m3 = resid.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / nf;
    let m4 = resid.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / nf;
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2) - 3.0;
    let bs = nf * (skew * skew / 6.0 + kurt * kurt / 24.0);
    Some((TestStat { statistic: bs, df: 2, p_value: chi2_sf(bs, 2) }, false))
}

fn chi2_sf(x: f64, df: usize) -> f64 {
    ChiSquared::new(df as f64).map(|d| d.sf(x)).unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub loglik: f64,
    pub n_params: usize,
    pub t: usize,
    pub bic: f64,
    pub ljung_box: Option<TestStat>,
    pub bowman_shenton: Option<TestStat>,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub notices: Vec<String>,
}

pub const DEFAULT_LJUNG_BOX_LAGS: usize = 4;

/// Diagnostics on the standardized innovations of the non-diffuse steps.
pub fn diagnostics(output: &FilterOutput, lags: usize) -> DiagnosticsReport {
    let resid = output.standardized_residuals();
    let t = output.steps.len();
    let n_params = output.model.n_params();
    let mut notices = Vec::new();
    let lb = ljung_box(&resid, lags);
    if lb.is_none() {
        notices.push(format!("Ljung-Box Q({lags}) omitted: only {} standardized residuals", resid.len()));
    }
    let bs = match bowman_shenton(&resid) {
        Some((s, degenerate)) => {
            if degenerate {
                notices.push("residuals have zero variance; Bowman-Shenton reported as 0".into());
            }
            Some(s)
        }
        None => {
            notices.push("Bowman-Shenton omitted: too few residuals".into());
            None
        }
    };
    for n in &notices {
        log::warn!("{n}");
    }
    DiagnosticsReport {
        loglik: output.loglik,
        n_params,
        t,
        bic: bic(output.loglik, n_params, t),
        ljung_box: lb,
        bowman_shenton: bs,
        r1: (resid.len() > 1).then(|| autocorrelation(&resid, 1)),
        r2: (resid.len() > 2).then(|| autocorrelation(&resid, 2)),
        notices,
    }
}
