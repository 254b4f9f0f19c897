//! Nonparametric tests for the absence and nature of a drift in the trend
//! coefficients.

mod critical;
mod stats;
mod variance;

pub use critical::{
    simulate_critical_values, simulate_null_draws, CriticalValueTable, Functional, NullDraws, DEFAULT_LEVELS,
};
pub use stats::{f_statistic, t_statistics, FStatistic, TStatistics};
pub use variance::{
    autocovariance, bartlett, demean_diff_transform, hac_variance, long_run_variance, DemeanedDiffSeries,
    VarianceEstimate,
};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::series::TrendSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceEstimator {
    /// Homoskedastic long-run variance of the demeaned differences.
    #[default]
    LongRun,
    /// Kernel-weighted entries of the transformed sampling covariance.
    Hac,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftDistribution {
    #[default]
    Normal,
    /// Student t with `T-1` degrees of freedom.
    StudentT,
}

pub const DEFAULT_LAGS: usize = 3;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrendTestConfig {
    pub lags: usize,
    pub estimator: VarianceEstimator,
    pub distribution: DriftDistribution,
    pub double_offdiag: bool,
    pub n_grid: usize,
    pub reps: usize,
    pub seed: u64,
    /// Nominal size for the reported critical values.
    pub alpha: f64,
}

impl Default for TrendTestConfig {
    fn default() -> Self {
        Self {
            lags: DEFAULT_LAGS,
            estimator: VarianceEstimator::default(),
            distribution: DriftDistribution::default(),
            double_offdiag: false,
            n_grid: 1000,
            reps: 100_000,
            seed: 0,
            alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalValues {
    pub alpha: f64,
    /// Two-sided cutoff for `|t_ν|` under the configured distribution.
    pub t_nu: f64,
    pub t_sd: f64,
    pub t_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendTestReport {
    pub t: usize,
    pub estimator: VarianceEstimator,
    pub distribution: DriftDistribution,
    pub lags: usize,
    pub double_offdiag: bool,
    pub sigma2: f64,
    pub sigma2_negative: bool,
    /// `None` when the variance estimate is not positive.
    pub statistics: Option<TStatistics>,
    pub p_nu: Option<f64>,
    pub p_nu_normal: Option<f64>,
    pub p_nu_student: Option<f64>,
    pub p_sd: Option<f64>,
    pub p_s: Option<f64>,
    pub critical_values: CriticalValues,
    pub f: Option<FStatistic>,
    pub null_reps: usize,
    pub n_grid: usize,
    pub seed: u64,
    pub notices: Vec<String>,
}

/// Runs every test, simulating the null distributions from `cfg`.
pub fn run_trend_tests(series: &TrendSeries, cfg: &TrendTestConfig) -> Result<TrendTestReport> {
    let draws = simulate_null_draws(cfg.n_grid, cfg.reps, cfg.seed)?;
    run_trend_tests_with_draws(series, cfg, &draws)
}

/// Same as [`run_trend_tests`] with precomputed null draws, which lets
/// simulation studies reuse one table.
pub fn run_trend_tests_with_draws(series: &TrendSeries, cfg: &TrendTestConfig, draws: &NullDraws) -> Result<TrendTestReport> {
    series.validate()?;
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {} outside (0,1)", cfg.alpha)));
    }
    let t = series.len();
    let cov = series.covariance_matrix();
    let d = demean_diff_transform(&series.beta, cov.as_ref())?;
    let est = match cfg.estimator {
        VarianceEstimator::LongRun => long_run_variance(&d.values, cfg.lags, bartlett)?,
        VarianceEstimator::Hac => {
            let omega = d
                .omega
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("HAC variance needs the sampling covariance".into()))?;
            hac_variance(omega, cfg.lags, bartlett, cfg.double_offdiag)?
        }
    };
    let mut notices = Vec::new();
    if est.negative {
        notices.push(format!("variance estimate {} is negative", est.value));
    }
    let statistics = if est.value > 0.0 {
        Some(t_statistics(&series.beta, est.value.sqrt())?)
    } else {
        notices.push("t-statistics undefined for a non-positive variance".into());
        None
    };

    let normal = Normal::standard();
    let student = StudentsT::new(0.0, 1.0, (t - 1) as f64).map_err(|e| Error::Numeric(e.to_string()))?;
    let p_nu_normal = statistics.map(|s| 2.0 * normal.cdf(-s.t_nu.abs()));
    let p_nu_student = statistics.map(|s| 2.0 * student.cdf(-s.t_nu.abs()));
    let (p_nu, t_crit) = match cfg.distribution {
        DriftDistribution::Normal => (p_nu_normal, normal.inverse_cdf(1.0 - cfg.alpha / 2.0)),
        DriftDistribution::StudentT => (p_nu_student, student.inverse_cdf(1.0 - cfg.alpha / 2.0)),
    };
    let level = 1.0 - cfg.alpha;
    let critical_values = CriticalValues {
        alpha: cfg.alpha,
        t_nu: t_crit,
        t_sd: CriticalValueTable::from_draws(draws, Functional::BridgeSquared, &[level])?.quantiles[0].1,
        t_s: CriticalValueTable::from_draws(draws, Functional::WienerSquared, &[level])?.quantiles[0].1,
    };

    let f = match &cov {
        Some(c) => Some(f_statistic(&series.beta, c, series.n_transitions)?),
        None => {
            notices.push("F-statistic omitted: no sampling covariance".into());
            None
        }
    };
    for n in &notices {
        log::warn!("{n}");
    }
    Ok(TrendTestReport {
        t,
        estimator: cfg.estimator,
        distribution: cfg.distribution,
        lags: cfg.lags,
        double_offdiag: cfg.double_offdiag,
        sigma2: est.value,
        sigma2_negative: est.negative,
        p_sd: statistics.map(|s| draws.upper_p_value(Functional::BridgeSquared, s.t_sd)),
        p_s: statistics.map(|s| draws.upper_p_value(Functional::WienerSquared, s.t_s)),
        statistics,
        p_nu,
        p_nu_normal,
        p_nu_student,
        critical_values,
        f,
        null_reps: draws.reps,
        n_grid: draws.n_grid,
        seed: draws.seed,
        notices,
    })
}
