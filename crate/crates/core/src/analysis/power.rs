//! Probability that the filtered level falls after a given process shock.

use rand_distr::{Distribution, Normal as NormalDist, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::coefficients::{asymptotic_coefficients, exact_coefficients, CoefficientMode, CoefficientTable};
use super::gain::{fixed_point, gain_sequence};
use crate::error::{Error, Result};
use crate::rng::{domain, substream};

/// Coefficients at order `k` for a constant signal-to-noise ratio.
pub fn coefficients_for(k: usize, s: f64, mode: CoefficientMode) -> Result<CoefficientTable> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("order {k} below 2")));
    }
    match mode {
        CoefficientMode::Exact => exact_coefficients(k, &gain_sequence(&vec![s; k])?.gains),
        CoefficientMode::Asymptotic => asymptotic_coefficients(k, fixed_point(s, 0.0)?.gain),
    }
}

/// `θ(x) = Φ(-c_k x / sqrt(V̄))`, `x = η_k/σ_η`, where `V̄` is the variance
/// of all other shocks' contribution in units of `σ_η²`.
pub fn theta(table: &CoefficientTable, s: f64, x: f64) -> f64 {
    let k = table.k;
    let vbar = table.c[..k - 1].iter().map(|c| c * c).sum::<f64>() + table.d.iter().map(|d| d * d).sum::<f64>() / s;
    Normal::standard().cdf(-table.c[k - 1] * x / vbar.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveKind {
    Power,
    Size,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerCurve {
    pub kind: CurveKind,
    pub k: usize,
    pub s: f64,
    pub mode: CoefficientMode,
    pub x: Vec<f64>,
    pub theta: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl PowerCurve {
    /// The curve's own values: `θ` for power, `α` for size.
    pub fn values(&self) -> &[f64] {
        match self.kind {
            CurveKind::Power => &self.theta,
            CurveKind::Size => &self.alpha,
        }
    }

    /// `x,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,value\n");
        for (x, v) in self.x.iter().zip(self.values()) {
            out.push_str(&format!("{x:?},{v:?}\n"));
        }
        out
    }
}

fn curve(kind: CurveKind, x: &[f64], k: usize, s: f64, mode: CoefficientMode) -> Result<PowerCurve> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidArgument(format!("signal-to-noise ratio must be positive, got {s}")));
    }
    let table = coefficients_for(k, s, mode)?;
    // both curves are indexed by the shock magnitude: θ at -|x| and the
    // size of a shock +|x|, which by symmetry is 1 - θ(-|x|)
    let theta: Vec<f64> = x.iter().map(|&v| theta(&table, s, -v.abs())).collect();
    let alpha = theta.iter().map(|t| 1.0 - t).collect();
    Ok(PowerCurve { kind, k, s, mode, x: x.to_vec(), theta, alpha })
}

/// Power over standardized negative shocks.
pub fn power(x: &[f64], k: usize, s: f64, mode: CoefficientMode) -> Result<PowerCurve> {
    if x.iter().any(|v| *v > 0.0) {
        return Err(Error::InvalidArgument("power is defined on non-positive shocks".into()));
    }
    curve(CurveKind::Power, x, k, s, mode)
}

/// Size over standardized non-negative shocks: the probability of a
/// registered fall after a rise `x`, equal to `1 - θ(-x)`.
pub fn size(x: &[f64], k: usize, s: f64, mode: CoefficientMode) -> Result<PowerCurve> {
    if x.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidArgument("size is defined on non-negative shocks".into()));
    }
    curve(CurveKind::Size, x, k, s, mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloPower {
    pub estimate: f64,
    pub std_error: f64,
    pub reps: usize,
}

/// Simulates the scalar filter with `σ_η = 1` and `σ_ε² = 1/s`, the shock
/// at step `k` pinned to `x`, and counts falls `K_k v_k < 0`.
pub fn monte_carlo_power(k: usize, s: f64, x: f64, reps: usize, seed: u64) -> Result<MonteCarloPower> {
    if k < 2 || !(s > 0.0) || reps == 0 {
        return Err(Error::InvalidArgument("need k >= 2, s > 0 and reps > 0".into()));
    }
    let eps = NormalDist::new(0.0, (1.0 / s).sqrt()).map_err(|e| Error::Numeric(e.to_string()))?;
    let falls: usize = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, domain::POWER_ORACLE, r as u64);
            // plain scalar recursion; the diffuse first step sets the
            // estimate to y_1 with zero posterior variance
            let h = 1.0 / s;
            let (mut level, mut est, mut p) = (0.0f64, 0.0f64, 0.0f64);
            let mut update = 0.0;
            for step in 1..=k {
                let eta: f64 = if step == k { x } else { StandardNormal.sample(&mut rng) };
                level += eta;
                let y = level + eps.sample(&mut rng);
                let gain = if step == 1 { 1.0 } else { (p + 1.0) / (p + 1.0 + h) };
                update = gain * (y - est);
                est += update;
                p = if step == 1 { 0.0 } else { (1.0 - gain) * (p + 1.0) };
            }
            usize::from(update < 0.0)
        })
        .sum();
    let est = falls as f64 / reps as f64;
    Ok(MonteCarloPower { estimate: est, std_error: (est * (1.0 - est) / reps as f64).sqrt(), reps })
}
