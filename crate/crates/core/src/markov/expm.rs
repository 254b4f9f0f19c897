//! Interval transition probabilities for the progressive 3-state generator.

use crate::error::{Error, Result};

/// Generator of the illness-death chain: 1 -> 2, 1 -> 3, 2 -> 3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityMatrix {
    pub q12: f64,
    pub q13: f64,
    pub q23: f64,
}

impl IntensityMatrix {
    pub fn new(q12: f64, q13: f64, q23: f64) -> Result<Self> {
        for (name, v) in [("q12", q12), ("q13", q13), ("q23", q23)] {
            if !v.is_finite() {
                return Err(Error::Numeric(format!("intensity {name} is not finite ({v})")));
            }
            if v < 0.0 {
                return Err(Error::InvalidArgument(format!("intensity {name} is negative ({v})")));
            }
        }
        Ok(Self { q12, q13, q23 })
    }

    /// Validates a full 3x3 generator and keeps its free entries.
    pub fn from_matrix(q: [[f64; 3]; 3]) -> Result<Self> {
        if q[1][0] != 0.0 || q[2][0] != 0.0 || q[2][1] != 0.0 {
            return Err(Error::InvalidArgument(
                "generator must be upper triangular (entries (2,1),(3,1),(3,2) zero)".into(),
            ));
        }
        for (r, row) in q.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if s.abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!("generator row {} sums to {s}", r + 1)));
            }
        }
        Self::new(q[0][1], q[0][2], q[1][2])
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let a = self.q12 + self.q13;
        [
            [-a, self.q12, self.q13],
            [0.0, -self.q23, self.q23],
            [0.0, 0.0, 0.0],
        ]
    }
}

/// `P = exp(wQ)` together with the interval width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionMatrix {
    pub p: [[f64; 3]; 3],
    pub width: f64,
}

/// Closest two exit rates below which the divided difference switches to its series.
pub const DEGENERATE_RATE_GAP: f64 = 1e-7;

/// `(1 - e^{-x}) / x`, continuous at 0.
fn h(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0
    } else {
        -f64::exp_m1(-x) / x
    }
}

/// Derivative of [`h`].
fn dh(x: f64) -> f64 {
    if x.abs() < 0.1 {
        // sum_{n>=1} n (-1)^n x^{n-1} / (n+1)!
        let mut term_fact = 2.0; // (n+1)!
        let mut pow = 1.0;
        let mut sum = 0.0;
        for n in 1..=14 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * n as f64 * pow / term_fact;
            pow *= x;
            term_fact *= (n + 2) as f64;
        }
        sum
    } else {
        ((-x).exp() * (1.0 + x) - 1.0) / (x * x)
    }
}

/// Divided difference `(e^{-bw} - e^{-aw}) / (a - b)` and its partials in `a`, `b`.
fn divided_difference(a: f64, b: f64, w: f64) -> (f64, f64, f64) {
    let gap = a - b;
    if gap.abs() < DEGENERATE_RATE_GAP {
        // expand around the mean rate to keep the branch symmetric
        let c = 0.5 * (a + b);
        let e = (-c * w).exp();
        let d = gap * w;
        let val = w * e * (1.0 + d * d / 24.0);
        let da = -0.5 * w * w * e + w * w * e * d / 12.0;
        let db = -0.5 * w * w * e - w * w * e * d / 12.0;
        return (val, da, db);
    }
    // the formula is symmetric in (a, b); factor out the slower decay
    let (lo, hi_minus_lo, swapped) = if gap >= 0.0 { (b, gap, false) } else { (a, -gap, true) };
    let e = (-lo * w).exp();
    let d = hi_minus_lo * w;
    let hv = h(d);
    let hd = dh(d);
    let val = w * e * hv;
    let d_hi = w * w * e * hd;
    let d_lo = -w * w * e * (hv + hd);
    if swapped {
        (val, d_lo, d_hi)
    } else {
        (val, d_hi, d_lo)
    }
}

fn check_width(w: f64) -> Result<()> {
    if !(w > 0.0) || !w.is_finite() {
        return Err(Error::InvalidArgument(format!("interval width must be positive, got {w}")));
    }
    Ok(())
}

/// `exp(wQ)` in closed form.
pub fn transition_probability(q: &IntensityMatrix, w: f64) -> Result<TransitionMatrix> {
    check_width(w)?;
    Ok(closed_form(q, w).0)
}

/// Partial derivatives of `P` with respect to `(q12, q13, q23)`.
pub type TransitionPartials = [[[f64; 3]; 3]; 3];

/// `exp(wQ)` and its derivatives with respect to the three free intensities.
pub fn transition_probability_with_partials(
    q: &IntensityMatrix,
    w: f64,
) -> Result<(TransitionMatrix, TransitionPartials)> {
    check_width(w)?;
    Ok(closed_form(q, w))
}

pub(crate) fn closed_form(q: &IntensityMatrix, w: f64) -> (TransitionMatrix, TransitionPartials) {
    let a = q.q12 + q.q13;
    let b = q.q23;
    let p11 = (-a * w).exp();
    let p22 = (-b * w).exp();
    let (dd, dd_a, dd_b) = divided_difference(a, b, w);
    let p12 = q.q12 * dd;
    let p13 = (-f64::exp_m1(-a * w) - p12).max(0.0);
    let p23 = -f64::exp_m1(-b * w);
    let p = [[p11, p12, p13], [0.0, p22, p23], [0.0, 0.0, 1.0]];

    let mut dp = [[[0.0; 3]; 3]; 3];
    let dp11_da = -w * p11;
    let dp12 = [dd + q.q12 * dd_a, q.q12 * dd_a, q.q12 * dd_b];
    for (j, d) in dp.iter_mut().enumerate() {
        let d11 = if j < 2 { dp11_da } else { 0.0 };
        d[0][0] = d11;
        d[0][1] = dp12[j];
        d[0][2] = -d11 - dp12[j];
    }
    dp[2][1][1] = -w * p22;
    dp[2][1][2] = w * p22;
    (TransitionMatrix { p, width: w }, dp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut c = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    c[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        c
    }

    /// Taylor series with scaling and squaring; terms added until the
    /// increment falls below 1e-16.
    fn taylor_oracle(q: [[f64; 3]; 3], w: f64) -> [[f64; 3]; 3] {
        let norm = q.iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max) * w;
        let mut squarings = 0;
        let mut scale = w;
        while norm / 2f64.powi(squarings) > 0.5 {
            squarings += 1;
        }
        scale /= 2f64.powi(squarings);
        let a: Vec<Vec<f64>> = q.iter().map(|r| r.iter().map(|x| x * scale).collect()).collect();
        let a = [
            [a[0][0], a[0][1], a[0][2]],
            [a[1][0], a[1][1], a[1][2]],
            [a[2][0], a[2][1], a[2][2]],
        ];
        let mut sum = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let mut term = sum;
        for n in 1..200 {
            term = matmul(&term, &a);
            for row in term.iter_mut() {
                for x in row.iter_mut() {
                    *x /= n as f64;
                }
            }
            let inc = term.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
            for i in 0..3 {
                for j in 0..3 {
                    sum[i][j] += term[i][j];
                }
            }
            if inc < 1e-16 {
                break;
            }
        }
        for _ in 0..squarings {
            sum = matmul(&sum, &sum);
        }
        sum
    }

    #[test]
    fn zero_generator_gives_identity() {
        let q = IntensityMatrix::new(0.0, 0.0, 0.0).unwrap();
        let p = transition_probability(&q, 3.0).unwrap().p;
        assert_eq!(p, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    }

    #[test]
    fn worked_example() {
        let q = IntensityMatrix::new(0.2, 0.1, 0.2).unwrap();
        let p = transition_probability(&q, 2.0).unwrap().p;
        assert_abs_diff_eq!(p[0][0], (-0.6f64).exp(), epsilon = 1e-15);
        let expect = 0.2 * ((-0.6f64).exp() - (-0.4f64).exp()) / (0.2 - 0.3);
        assert_abs_diff_eq!(p[0][1], expect, epsilon = 1e-15);
        let oracle = taylor_oracle(q.matrix(), 2.0);
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(p[i][j], oracle[i][j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_rates() {
        let q = IntensityMatrix::new(0.15, 0.1, 0.25).unwrap();
        let w = 2.0;
        let p = transition_probability(&q, w).unwrap().p;
        assert!(p[0][1].is_finite());
        assert_abs_diff_eq!(p[0][1], w * 0.15 * (-w * 0.25f64).exp(), epsilon = 1e-15);
        let oracle = taylor_oracle(q.matrix(), w);
        assert_abs_diff_eq!(p[0][1], oracle[0][1], epsilon = 1e-12);
        // just either side of the switch
        for gap in [0.9e-7, 1.1e-7, 1e-5, 1e-3] {
            let q = IntensityMatrix::new(0.15, 0.1 + gap, 0.25).unwrap();
            let p = transition_probability(&q, w).unwrap().p;
            let oracle = taylor_oracle(q.matrix(), w);
            assert_abs_diff_eq!(p[0][1], oracle[0][1], epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_bad_width_and_generator() {
        let q = IntensityMatrix::new(0.1, 0.1, 0.1).unwrap();
        assert!(transition_probability(&q, 0.0).is_err());
        assert!(transition_probability(&q, -1.0).is_err());
        assert!(IntensityMatrix::new(-0.1, 0.0, 0.0).is_err());
        assert!(IntensityMatrix::new(f64::NAN, 0.0, 0.0).is_err());
        assert!(IntensityMatrix::from_matrix([[-1.0, 1.0, 0.0], [0.5, -0.5, 0.0], [0.0; 3]]).is_err());
        assert!(IntensityMatrix::from_matrix([[-1.0, 0.5, 0.4], [0.0; 3], [0.0; 3]]).is_err());
        let ok = IntensityMatrix::from_matrix([[-2.0, 1.0, 1.0], [0.0, -1.0, 1.0], [0.0; 3]]).unwrap();
        assert_eq!(ok, IntensityMatrix::new(1.0, 1.0, 1.0).unwrap());
    }

    #[test]
    fn extreme_rates_stay_finite() {
        for &(a, b, c) in &[(0.0, 0.0, 400.0), (400.0, 0.0, 0.0), (1e-9, 0.0, 300.0)] {
            let q = IntensityMatrix::new(a, b, c).unwrap();
            let (p, dp) = transition_probability_with_partials(&q, 2.0).unwrap();
            assert!(p.p.iter().flatten().all(|x| x.is_finite()));
            assert!(dp.iter().flatten().flatten().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        let cases = [(0.2, 0.1, 0.2), (0.15, 0.1, 0.25), (0.03, 0.02, 0.3), (0.5, 0.4, 0.01), (0.2, 0.1, 0.3 + 1e-3)];
        for &(q12, q13, q23) in &cases {
            let w = 2.0;
            let base = [q12, q13, q23];
            let (_, dp) = closed_form(&IntensityMatrix::new(q12, q13, q23).unwrap(), w);
            for j in 0..3 {
                let eps = 1e-6;
                let mut up = base;
                let mut dn = base;
                up[j] += eps;
                dn[j] -= eps;
                let pu = closed_form(&IntensityMatrix::new(up[0], up[1], up[2]).unwrap(), w).0.p;
                let pd = closed_form(&IntensityMatrix::new(dn[0], dn[1], dn[2]).unwrap(), w).0.p;
                for r in 0..3 {
                    for c in 0..3 {
                        let fd = (pu[r][c] - pd[r][c]) / (2.0 * eps);
                        assert_abs_diff_eq!(dp[j][r][c], fd, epsilon = 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn monotone_in_q12_for_small_width() {
        for i in 0..20 {
            let w = 0.05 + 0.05 * i as f64;
            let mut last = -1.0;
            for j in 0..30 {
                let q = IntensityMatrix::new(0.01 + 0.05 * j as f64, 0.1, 0.3).unwrap();
                let p12 = transition_probability(&q, w).unwrap().p[0][1];
                assert!(p12 > last);
                last = p12;
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn matches_taylor_and_is_stochastic(q12 in 0.0..5.0f64, q13 in 0.0..5.0f64, q23 in 0.0..5.0f64, w in 0.01..4.0f64) {
            let q = IntensityMatrix::new(q12, q13, q23).unwrap();
            let p = transition_probability(&q, w).unwrap().p;
            let o = taylor_oracle(q.matrix(), w);
            for r in 0..3 {
                let s: f64 = p[r].iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
                for c in 0..3 {
                    prop_assert!((0.0..=1.0).contains(&p[r][c]));
                    prop_assert!((p[r][c] - o[r][c]).abs() < 1e-10);
                }
            }
            prop_assert_eq!(p[1][0], 0.0);
            prop_assert_eq!(p[2][2], 1.0);
        }

        #[test]
        fn chapman_kolmogorov(q12 in 0.0..5.0f64, q13 in 0.0..5.0f64, q23 in 0.0..5.0f64, w in 0.01..2.0f64, v in 0.01..2.0f64) {
            let q = IntensityMatrix::new(q12, q13, q23).unwrap();
            let pw = transition_probability(&q, w).unwrap().p;
            let pv = transition_probability(&q, v).unwrap().p;
            let pwv = transition_probability(&q, w + v).unwrap().p;
            let prod = matmul(&pw, &pv);
            for r in 0..3 {
                for c in 0..3 {
                    prop_assert!((prod[r][c] - pwv[r][c]).abs() < 1e-10);
                }
            }
        }
    }
}
