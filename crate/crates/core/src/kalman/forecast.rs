//! Multi-step forecasts from the last filtered state.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::filter::{FilterOutput, Variant};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForecastStep {
    pub h: usize,
    pub mean_log: f64,
    pub var: f64,
    pub lo: f64,
    pub hi: f64,
    /// `exp(mean_log)`: the hazard multiplier relative to the reference level.
    pub mean_hazard_scale: f64,
    pub lo_hazard: f64,
    pub hi_hazard: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Forecast {
    pub horizon: usize,
    pub level: f64,
    pub steps: Vec<ForecastStep>,
}

pub const FORECAST_HEADER: &str = "h,mean_log,var,lo,hi,mean_hazard_scale";

impl Forecast {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(FORECAST_HEADER);
        out.push('\n');
        for s in &self.steps {
            out.push_str(&format!("{},{:?},{:?},{:?},{:?},{:?}\n", s.h, s.mean_log, s.var, s.lo, s.hi, s.mean_hazard_scale));
        }
        out
    }
}

/// Propagates the final posterior `horizon` steps ahead.
pub fn forecast(output: &FilterOutput, horizon: usize, level: f64) -> Result<Forecast> {
    if horizon < 1 {
        return Err(Error::InvalidArgument("forecast horizon must be at least 1".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level {level} outside (0,1)")));
    }
    let last = output
        .steps
        .last()
        .ok_or_else(|| Error::InvalidArgument("filter output has no steps".into()))?;
    let m = &output.model;
    let z = Normal::standard().inverse_cdf(0.5 + 0.5 * level);
    let q_eta = m.sigma_eta * m.sigma_eta;
    let mut steps = Vec::with_capacity(horizon);

    let mut a = last.post_mean.clone();
    let mut p = last.post_cov.clone();
    for h in 1..=horizon {
        match m.variant {
            Variant::ZeroDrift => {
                p[0][0] += q_eta;
            }
            Variant::ConstantDrift => {
                a[0] += m.nu;
                p[0][0] += q_eta;
            }
            Variant::StochasticDrift => {
                // T = [[1,1],[0,1]], Q = diag(σ_η², σ_ξ²)
                a = vec![a[0] + a[1], a[1]];
                let (p00, p01, p11) = (p[0][0], p[0][1], p[1][1]);
                p = vec![
                    vec![p00 + 2.0 * p01 + p11 + q_eta, p01 + p11],
                    vec![p01 + p11, p11 + m.sigma_xi * m.sigma_xi],
                ];
            }
        }
        let (mean, var) = (a[0], p[0][0]);
        let half = z * var.max(0.0).sqrt();
        steps.push(ForecastStep {
            h,
            mean_log: mean,
            var,
            lo: mean - half,
            hi: mean + half,
            mean_hazard_scale: mean.exp(),
            lo_hazard: (mean - half).exp(),
            hi_hazard: (mean + half).exp(),
        });
    }
    Ok(Forecast { horizon, level, steps })
}
