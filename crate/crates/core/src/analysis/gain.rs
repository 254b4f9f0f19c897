//! Gain and normalized-variance recursions of the scalar random-walk filter.

use serde::Serialize;

use crate::error::{Error, Result};

/// Signal-to-noise ratios, gains and normalized posterior variances.
///
/// Indexing is 1-based in the docs and 0-based in the vectors: `gains[0]`
/// is the diffuse first gain `K_1 = 1`, so the first non-diffuse gain is
/// `gains[1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainTrajectory {
    /// `s_k = σ_η² / σ_kk²`.
    pub s: Vec<f64>,
    pub gains: Vec<f64>,
    /// `P_{k|k} / σ_kk²`.
    pub normalized_post_var: Vec<f64>,
    /// `ι_k = 1 - σ_kk²/σ_{k+1,k+1}²`, one shorter than `s`.
    pub iota: Vec<f64>,
}

impl GainTrajectory {
    /// CSV with the canonical index and the non-diffuse count alongside.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,k_nondiffuse,s,gain,normalized_post_var\n");
        for k in 0..self.gains.len() {
            let nd = if k == 0 { String::new() } else { k.to_string() };
            out.push_str(&format!("{},{},{:?},{:?},{:?}\n", k + 1, nd, self.s[k], self.gains[k], self.normalized_post_var[k]));
        }
        out
    }
}

/// `Σ_{d=1}^{k} Π_{i=d}^{k} (1-K_i)` for every prefix, via
/// `S_k = (1-K_k)(1+S_{k-1})`.
pub fn gain_sums(gains: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(gains.len());
    let mut acc = 0.0;
    for &k in gains {
        acc = (1.0 - k) * (1.0 + acc);
        out.push(acc);
    }
    out
}

/// Gains from signal-to-noise ratios under a diffuse start.
///
/// `K_{k+1} = (s S_k + s)/(s S_k + s + 1)` where `s` is the ratio of the
/// step being updated, `s_{k+1}`; with a constant ratio the index makes no
/// difference.
pub fn gain_sequence(s: &[f64]) -> Result<GainTrajectory> {
    if s.is_empty() {
        return Err(Error::InvalidArgument("empty signal-to-noise sequence".into()));
    }
    if let Some(bad) = s.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument(format!("signal-to-noise ratios must be positive, got {bad}")));
    }
    let mut gains = vec![1.0];
    let mut sum = 0.0; // S_1 = 0 after the diffuse step
    for &sk in &s[1..] {
        let num = sk * sum + sk;
        let k = num / (num + 1.0);
        gains.push(k);
        sum = (1.0 - k) * (1.0 + sum);
    }
    let sums = gain_sums(&gains);
    let normalized_post_var = sums.iter().zip(s).map(|(sum, sk)| sk * sum).collect();
    let iota = s.windows(2).map(|w| 1.0 - w[1] / w[0]).collect();
    Ok(GainTrajectory { s: s.to_vec(), gains, normalized_post_var, iota })
}

/// `ν_{k+1} = (1-ι_k)(ν_k+s_k)/(ν_k+s_k+1)` from `ν0`. Returns `ν0` followed
/// by one value per `(s, ι)` pair.
pub fn variance_map_iterate(nu0: f64, s: &[f64], iota: &[f64]) -> Vec<f64> {
    let mut out = vec![nu0];
    let mut nu = nu0;
    for (&sk, &ik) in s.iter().zip(iota) {
        nu = (1.0 - ik) * (nu + sk) / (nu + sk + 1.0);
        out.push(nu);
    }
    out
}

/// One step of the normalized posterior variance exactly as the filter
/// produces it. Agrees with [`variance_map_iterate`] when `ι = 0`.
pub fn exact_variance_map_step(nu: f64, s: f64, iota: f64) -> f64 {
    let a = (1.0 - iota) * (nu + s);
    a / (a + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPoint {
    pub s: f64,
    pub iota: f64,
    pub nu: f64,
    pub gain: f64,
}

/// Closed-form fixed point of the variance map,
/// `ν∞ = -(s+ι)/2 + sqrt((s+ι)²/4 + (1-ι)s)`, and `K∞ = (ν∞+s)/(ν∞+s+1)`.
pub fn fixed_point(s: f64, iota: f64) -> Result<FixedPoint> {
    if !(s > 0.0 && s.is_finite()) || !(iota < 1.0) {
        return Err(Error::InvalidArgument(format!("fixed point needs s > 0 and ι < 1, got s={s}, ι={iota}")));
    }
    let half = 0.5 * (s + iota);
    let nu = -half + (half * half + (1.0 - iota) * s).sqrt();
    let gain = (nu + s) / (nu + s + 1.0);
    Ok(FixedPoint { s, iota, nu, gain })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Contraction {
    pub holds: bool,
    /// `(1+s+ν)² - ratio`; positive when the map contracts.
    pub margin: f64,
}

/// Contraction condition `σ_kk²/σ_{k+1,k+1}² < (1+s_k+ν_k)²`.
pub fn contraction_check(s: f64, nu: f64, variance_ratio: f64) -> Contraction {
    let rhs = (1.0 + s + nu).powi(2);
    Contraction { holds: variance_ratio < rhs, margin: rhs - variance_ratio }
}

/// Slope and intercept with `K_{k+1} = m_k K_k + b_k`, for `k >= 2`
/// (1-based), from the gain history `K_1..K_k` and the ratio of step `k+1`.
///
/// `m_k = s S_{k-1}/D` and `b_k = s(S_k + 1 - S_{k-1}K_k)/D` with
/// `D = s S_k + s + 1`.
pub fn linear_map_decomposition(k: usize, gains: &[f64], s_next: f64) -> Result<(f64, f64)> {
    if k < 2 || gains.len() < k {
        return Err(Error::InvalidArgument(format!("need k >= 2 and {k} gains, got {}", gains.len())));
    }
    let sums = gain_sums(&gains[..k]);
    let (s_k, s_km1) = (sums[k - 1], sums[k - 2]);
    let d = s_next * s_k + s_next + 1.0;
    let m = s_next * s_km1 / d;
    let b = s_next * (s_k + 1.0 - s_km1 * gains[k - 1]) / d;
    Ok((m, b))
}
