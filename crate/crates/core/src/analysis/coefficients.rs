//! Expansion of the update `K_k v_k` in process and measurement shocks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientMode {
    /// Uses the gain history `K_1..K_k`.
    Exact,
    /// Replaces every gain with the steady-state `K∞`.
    Asymptotic,
}

impl CoefficientMode {
    /// Asymptotic from order 4 on, exact below.
    pub fn default_for(k: usize) -> Self {
        if k >= 4 {
            Self::Asymptotic
        } else {
            Self::Exact
        }
    }
}

/// `K_k v_k = Σ_i c_i(k) η_i + d_i(k) ε_i`; vectors are indexed by `i-1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientTable {
    pub k: usize,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub mode: CoefficientMode,
}

impl CoefficientTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,c,d\n");
        for i in 0..self.k {
            out.push_str(&format!("{},{:?},{:?}\n", i + 1, self.c[i], self.d[i]));
        }
        out
    }
}

/// Forward recursions, linear in the order per coefficient:
/// `c_i^{k+1} = -K_{k+1}(-1 + Σ_{s=i}^{k} c_i^s)` and
/// `d_i^{k+1} = -K_{k+1} Σ_{s=i}^{k} d_i^s`, seeded with `c_i^i = d_i^i = K_i`.
pub fn exact_coefficients(k: usize, gains: &[f64]) -> Result<CoefficientTable> {
    if k < 1 || gains.len() < k {
        return Err(Error::InvalidArgument(format!("order {k} needs {k} gains, got {}", gains.len())));
    }
    let mut c = vec![0.0; k];
    let mut d = vec![0.0; k];
    for i in 0..k {
        // running sums over s = i..current order
        let mut sc = gains[i];
        let mut sd = gains[i];
        let (mut ci, mut di) = (gains[i], gains[i]);
        for &kn in &gains[i + 1..k] {
            ci = -kn * (-1.0 + sc);
            di = -kn * sd;
            sc += ci;
            sd += di;
        }
        c[i] = ci;
        d[i] = di;
    }
    Ok(CoefficientTable { k, c, d, mode: CoefficientMode::Exact })
}

/// Steady-state coefficients. The binomial sums
/// `c_i(k) = Σ_{m=0}^{k-i} (-1)^m C(k-i,m) K^{m+1}` and
/// `d_i(k) = -Σ_{m=0}^{k-i-1} (-1)^m C(k-i-1,m) K^{m+2}` (`i < k`) collapse to
/// `K(1-K)^{k-i}` and `-K²(1-K)^{k-i-1}`; the collapsed form avoids the
/// cancellation that ruins the alternating sums at large `k`. `d_k(k) = K`.
pub fn asymptotic_coefficients(k: usize, gain: f64) -> Result<CoefficientTable> {
    if !(gain > 0.0 && gain < 1.0) {
        return Err(Error::InvalidArgument(format!("steady-state gain {gain} outside (0,1)")));
    }
    if k < 1 {
        return Err(Error::InvalidArgument("order must be at least 1".into()));
    }
    let q = 1.0 - gain;
    let c = (1..=k).map(|i| gain * q.powi((k - i) as i32)).collect();
    let d = (1..=k).map(|i| if i == k { gain } else { -gain * gain * q.powi((k - i - 1) as i32) }).collect();
    Ok(CoefficientTable { k, c, d, mode: CoefficientMode::Asymptotic })
}

/// One signed product of gains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub negative: bool,
    /// 1-based gain indices in the product.
    pub factors: Vec<usize>,
}

impl Term {
    pub fn eval(&self, gains: &[f64]) -> f64 {
        let p: f64 = self.factors.iter().map(|&j| gains[j - 1]).product();
        if self.negative {
            -p
        } else {
            p
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnumeratedCoefficients {
    pub k: usize,
    pub c_terms: Vec<Vec<Term>>,
    pub d_terms: Vec<Vec<Term>>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

pub const MAX_ENUMERATION_ORDER: usize = 10;

/// Explicit sum over subsets: `c_i(k)` collects `(-1)^{|A|} K_k Π_{a∈A} K_a`
/// over `A ⊆ {i..k-1}`, and `d_i(k)` (for `i < k`) collects
/// `(-1)^{|A|+1} K_k K_i Π_{a∈A} K_a` over `A ⊆ {i+1..k-1}`.
pub fn enumerate_coefficients_oracle(k: usize, gains: &[f64]) -> Result<EnumeratedCoefficients> {
    if k > MAX_ENUMERATION_ORDER {
        return Err(Error::InvalidArgument(format!("enumeration refused above order {MAX_ENUMERATION_ORDER}")));
    }
    if k < 1 || gains.len() < k {
        return Err(Error::InvalidArgument(format!("order {k} needs {k} gains")));
    }
    let subsets = |lo: usize, hi: usize| -> Vec<Vec<usize>> {
        // all subsets of lo..=hi (empty range gives just the empty set)
        let pool: Vec<usize> = if lo <= hi { (lo..=hi).collect() } else { Vec::new() };
        (0u32..1 << pool.len())
            .map(|mask| pool.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &v)| v).collect())
            .collect()
    };
    let mut c_terms = Vec::with_capacity(k);
    let mut d_terms = Vec::with_capacity(k);
    for i in 1..=k {
        let ct: Vec<Term> = if i == k {
            vec![Term { negative: false, factors: vec![k] }]
        } else {
            subsets(i, k - 1)
                .into_iter()
                .map(|a| Term {
                    negative: a.len() % 2 == 1,
                    factors: std::iter::once(k).chain(a).collect(),
                })
                .collect()
        };
        let dt: Vec<Term> = if i == k {
            vec![Term { negative: false, factors: vec![k] }]
        } else {
            subsets(i + 1, k - 1)
                .into_iter()
                .map(|a| Term {
                    negative: a.len() % 2 == 0,
                    factors: [k, i].into_iter().chain(a).collect(),
                })
                .collect()
        };
        c_terms.push(ct);
        d_terms.push(dt);
    }
    let total = |ts: &Vec<Term>| ts.iter().map(|t| t.eval(gains)).sum::<f64>();
    let c = c_terms.iter().map(total).collect();
    let d = d_terms.iter().map(total).collect();
    Ok(EnumeratedCoefficients { k, c_terms, d_terms, c, d })
}
