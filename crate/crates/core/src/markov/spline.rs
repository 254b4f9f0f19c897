//! Natural (restricted) cubic spline basis in the truncated-power form.

use crate::error::{Error, Result};

/// Validated knot sequence for a natural cubic spline.
#[derive(Debug, Clone, PartialEq)]
pub struct Knots(Vec<f64>);

impl Knots {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 3 {
            return Err(Error::InvalidSpec(format!(
                "natural spline needs at least 3 knots, got {}",
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::InvalidSpec("spline knots must be finite".into()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSpec(format!(
                "spline knots must be strictly increasing: {knots:?}"
            )));
        }
        Ok(Self(knots))
    }

    /// Knots at the 10th, 50th and 90th percentiles of `ages`.
    pub fn from_percentiles(ages: &[f64]) -> Result<Self> {
        let mut sorted: Vec<f64> = ages.iter().copied().filter(|a| a.is_finite()).collect();
        if sorted.is_empty() {
            return Err(Error::InvalidSpec("no ages to place spline knots".into()));
        }
        sorted.sort_by(f64::total_cmp);
        let pick = |p: f64| quantile_sorted(&sorted, p);
        Self::new(vec![pick(0.1), pick(0.5), pick(0.9)])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Number of basis columns, linear term included.
    pub fn dim(&self) -> usize {
        self.0.len() - 1
    }
}

/// Linear-interpolation quantile (type 7) of an ascending slice.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[inline]
fn pos_cube(x: f64) -> f64 {
    if x > 0.0 {
        x * x * x
    } else {
        0.0
    }
}

/// Evaluates the basis at `age`: `[age, N_1(age), .., N_{K-2}(age)]`.
///
/// Each `N_j` is a cubic in `(age - t_j)_+` corrected at the last two knots so
/// that it is linear beyond the boundary knots, and scaled by `(t_K - t_1)^-2`.
pub fn spline_basis(age: f64, knots: &Knots) -> Result<Vec<f64>> {
    if !age.is_finite() {
        return Err(Error::InvalidArgument(format!("age must be finite, got {age}")));
    }
    let mut out = Vec::with_capacity(knots.dim());
    fill_basis(age, knots, &mut out);
    Ok(out)
}

pub(crate) fn fill_basis(age: f64, knots: &Knots, out: &mut Vec<f64>) {
    let t = knots.as_slice();
    let k = t.len();
    let last = t[k - 1];
    let penult = t[k - 2];
    let norm = (last - t[0]).powi(2);
    let span = last - penult;
    out.clear();
    out.push(age);
    for &tj in &t[..k - 2] {
        let v = pos_cube(age - tj) - pos_cube(age - penult) * (last - tj) / span
            + pos_cube(age - last) * (penult - tj) / span;
        out.push(v / norm);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Builds each cubic basis function from the natural-spline side conditions
    /// (zero cubic and quadratic coefficients past the last knot) by solving
    /// for the two boundary weights, then evaluates it directly.
    fn piecewise_oracle(age: f64, t: &[f64]) -> Vec<f64> {
        let k = t.len();
        let (p, l) = (t[k - 2], t[k - 1]);
        let norm = (l - t[0]).powi(2);
        let mut out = vec![age];
        for &tj in &t[..k - 2] {
            // c_j + c_p + c_l = 0 ; c_j t_j + c_p p + c_l l = 0, with c_j = 1
            let det = l - p;
            let c_p = (tj - l) / det;
            let c_l = (p - tj) / det;
            let cube = |x: f64| if x > 0.0 { x.powi(3) } else { 0.0 };
            out.push((cube(age - tj) + c_p * cube(age - p) + c_l * cube(age - l)) / norm);
        }
        out
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(Knots::new(vec![50.0, 60.0]).is_err());
        assert!(Knots::new(vec![50.0, 50.0, 60.0]).is_err());
        assert!(Knots::new(vec![70.0, 60.0, 80.0]).is_err());
    }

    #[test]
    fn left_boundary_has_only_linear_term() {
        let knots = Knots::new(vec![55.0, 62.0, 70.0, 85.0]).unwrap();
        let b = spline_basis(55.0, &knots).unwrap();
        assert_eq!(b[0], 55.0);
        assert!(b[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_piecewise_oracle() {
        let knots = Knots::new(vec![55.0, 70.0, 85.0]).unwrap();
        let b = spline_basis(70.0, &knots).unwrap();
        let o = piecewise_oracle(70.0, knots.as_slice());
        assert_eq!(b.len(), 2);
        for (x, y) in b.iter().zip(&o) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        // 15^3 / 30^2
        assert_abs_diff_eq!(b[1], 3.75, epsilon = 1e-12);

        let knots = Knots::new(vec![52.0, 61.0, 68.0, 77.0, 90.0]).unwrap();
        for i in 0..200 {
            let age = 40.0 + 0.3 * i as f64;
            let b = spline_basis(age, &knots).unwrap();
            let o = piecewise_oracle(age, knots.as_slice());
            for (x, y) in b.iter().zip(&o) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn second_derivative_vanishes_outside_boundary() {
        let knots = Knots::new(vec![55.0, 63.0, 71.0, 85.0]).unwrap();
        let h = 1e-2;
        let second = |x: f64, j: usize| {
            let f = |a: f64| spline_basis(a, &knots).unwrap()[j];
            (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
        };
        for j in 1..knots.dim() {
            for &x in &[40.0, 54.9, 85.1, 100.0] {
                assert_abs_diff_eq!(second(x, j), 0.0, epsilon = 1e-6);
            }
            // one-sided at the knots themselves
            let f = |a: f64| spline_basis(a, &knots).unwrap()[j];
            let left = (f(55.0) - 2.0 * f(55.0 - h) + f(55.0 - 2.0 * h)) / (h * h);
            let right = (f(85.0) - 2.0 * f(85.0 + h) + f(85.0 + 2.0 * h)) / (h * h);
            assert_abs_diff_eq!(left, 0.0, epsilon = 1e-6);
            assert_abs_diff_eq!(right, 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn percentile_knots() {
        let ages: Vec<f64> = (0..=100).map(|i| 50.0 + i as f64 * 0.4).collect();
        let k = Knots::from_percentiles(&ages).unwrap();
        assert_abs_diff_eq!(k.as_slice()[0], 54.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k.as_slice()[1], 70.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k.as_slice()[2], 86.0, epsilon = 1e-12);
    }
}
