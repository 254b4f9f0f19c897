//! Quasi-Newton minimization with a strong-Wolfe line search, and
//! finite-difference Hessians.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BfgsConfig {
    pub max_iter: usize,
    /// Stop when the gradient max-norm falls below this.
    pub grad_tol: f64,
    /// Stop when the relative objective change stays below this for
    /// `stall_iters` consecutive iterations.
    pub rel_f_tol: f64,
    pub stall_iters: usize,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        Self { max_iter: 500, grad_tol: 1e-6, rel_f_tol: 1e-10, stall_iters: 3 }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub message: String,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Point {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    dg: f64,
}

/// Minimizes `f`, which returns the value and gradient.
///
/// Non-finite values are treated as `+inf` so the line search backs off.
pub fn minimize<F>(mut f: F, x0: &[f64], cfg: &BfgsConfig) -> Result<BfgsResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("objective is not finite at the starting point".into()));
    }
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut first = true;
    let mut stall = 0;
    for iter in 0..cfg.max_iter {
        if max_abs(&g) < cfg.grad_tol {
            return Ok(BfgsResult { x, f: fx, grad: g, iterations: iter, converged: true, message: "gradient tolerance".into() });
        }
        let gv = DVector::from_column_slice(&g);
        let mut d: Vec<f64> = (-(&h * &gv)).iter().copied().collect();
        let mut dg = dot(&d, &g);
        if !(dg < 0.0) {
            h = DMatrix::identity(n, n);
            first = true;
            d = g.iter().map(|v| -v).collect();
            dg = dot(&d, &g);
        }
        let alpha0 = if first { (1.0 / max_abs(&g)).min(1.0) } else { 1.0 };
        let step = line_search(&mut f, &x, fx, &g, &d, dg, alpha0)?;
        let Some(p) = step else {
            if !first {
                h = DMatrix::identity(n, n);
                first = true;
                continue;
            }
            let converged = max_abs(&g) < cfg.grad_tol.sqrt();
            return Ok(BfgsResult {
                x,
                f: fx,
                grad: g,
                iterations: iter,
                converged,
                message: "line search could not make progress".into(),
            });
        };
        let s: Vec<f64> = d.iter().map(|v| v * p.alpha).collect();
        let y: Vec<f64> = p.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let rel = (fx - p.f).abs() / fx.abs().max(1.0);
        x.iter_mut().zip(&s).for_each(|(xi, si)| *xi += si);
        fx = p.f;
        g = p.g;
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if first {
                h = DMatrix::identity(n, n) * (sy / dot(&y, &y));
                first = false;
            }
            let sv = DVector::from_column_slice(&s);
            let yv = DVector::from_column_slice(&y);
            let rho = 1.0 / sy;
            let hy = &h * &yv;
            let yhy = yv.dot(&hy);
            // H+ = H - rho (s y'H + H y s') + (rho^2 y'Hy + rho) s s'
            h -= rho * (&sv * hy.transpose() + &hy * sv.transpose());
            h += (rho * rho * yhy + rho) * (&sv * sv.transpose());
        }
        if rel < cfg.rel_f_tol {
            stall += 1;
            if stall >= cfg.stall_iters {
                return Ok(BfgsResult {
                    x,
                    f: fx,
                    grad: g,
                    iterations: iter + 1,
                    converged: true,
                    message: "relative objective change".into(),
                });
            }
        } else {
            stall = 0;
        }
    }
    let converged = max_abs(&g) < cfg.grad_tol;
    Ok(BfgsResult { x, f: fx, grad: g, iterations: cfg.max_iter, converged, message: "iteration limit".into() })
}

fn eval_along<F>(f: &mut F, x: &[f64], d: &[f64], alpha: f64) -> Result<Point>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let xt: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + alpha * b).collect();
    let (mut v, g) = match f(&xt) {
        Ok(r) => r,
        Err(Error::Numeric(_)) => (f64::INFINITY, vec![f64::NAN; x.len()]),
        Err(e) => return Err(e),
    };
    if !v.is_finite() || g.iter().any(|t| !t.is_finite()) {
        v = f64::INFINITY;
    }
    let dg = if v.is_finite() { dot(&g, d) } else { f64::NAN };
    Ok(Point { alpha, f: v, g, dg })
}

/// Strong-Wolfe search by bracketing and zooming with safeguarded cubic
/// interpolation. Returns `None` when no acceptable step is found.
fn line_search<F>(f: &mut F, x: &[f64], f0: f64, g0: &[f64], d: &[f64], dg0: f64, alpha0: f64) -> Result<Option<Point>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let origin = Point { alpha: 0.0, f: f0, g: g0.to_vec(), dg: dg0 };
    let mut prev = origin;
    let mut alpha = alpha0;
    for i in 0..40 {
        let cur = eval_along(f, x, d, alpha)?;
        if !cur.f.is_finite() {
            // shrink toward the last good point
            alpha = prev.alpha + 0.25 * (alpha - prev.alpha);
            if alpha - prev.alpha < 1e-16 {
                break;
            }
            continue;
        }
        if cur.f > f0 + C1 * cur.alpha * dg0 || (i > 0 && cur.f >= prev.f) {
            return zoom(f, x, f0, dg0, d, prev, cur);
        }
        if cur.dg.abs() <= -C2 * dg0 {
            return Ok(Some(cur));
        }
        if cur.dg >= 0.0 {
            return zoom(f, x, f0, dg0, d, cur, prev);
        }
        alpha = (2.0 * cur.alpha).min(cur.alpha + 1e6);
        prev = cur;
    }
    Ok(if prev.alpha > 0.0 && prev.f < f0 { Some(prev) } else { None })
}

fn zoom<F>(f: &mut F, x: &[f64], f0: f64, dg0: f64, d: &[f64], mut lo: Point, mut hi: Point) -> Result<Option<Point>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    for _ in 0..60 {
        let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
        let width = b - a;
        if width <= 1e-14 * b.max(1e-300) {
            break;
        }
        let mut t = cubic_min(&lo, &hi).unwrap_or(0.5 * (lo.alpha + hi.alpha));
        if !(t > a + 0.1 * width && t < b - 0.1 * width) {
            t = 0.5 * (a + b);
        }
        let cur = eval_along(f, x, d, t)?;
        if !cur.f.is_finite() || cur.f > f0 + C1 * t * dg0 || cur.f >= lo.f {
            hi = cur;
        } else {
            if cur.dg.abs() <= -C2 * dg0 {
                return Ok(Some(cur));
            }
            if cur.dg * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    Ok(if lo.alpha > 0.0 && lo.f < f0 { Some(lo) } else { None })
}

fn cubic_min(p: &Point, q: &Point) -> Option<f64> {
    if !q.f.is_finite() || !q.dg.is_finite() {
        return None;
    }
    let d1 = p.dg + q.dg - 3.0 * (p.f - q.f) / (p.alpha - q.alpha);
    let disc = d1 * d1 - p.dg * q.dg;
    if disc < 0.0 {
        return None;
    }
    let d2 = (q.alpha - p.alpha).signum() * disc.sqrt();
    let t = q.alpha - (q.alpha - p.alpha) * (q.dg + d2 - d1) / (q.dg - p.dg + 2.0 * d2);
    t.is_finite().then_some(t)
}

/// Hessian of a scalar function by central differences of function values,
/// Richardson-extrapolated over steps `h` and `2h`, then symmetrized.
/// `steps[i]` is the base step for coordinate `i`.
pub fn hessian_from_values<F>(mut f: F, x: &[f64], steps: &[f64]) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = x.len();
    let f0 = f(x)?;
    let mut hm = DMatrix::zeros(n, n);
    let mut at = |dx: &[(usize, f64)]| -> Result<f64> {
        let mut y = x.to_vec();
        for &(i, v) in dx {
            y[i] += v;
        }
        f(&y)
    };
    let second = |at: &mut dyn FnMut(&[(usize, f64)]) -> Result<f64>, i: usize, j: usize, scale: f64| -> Result<f64> {
        let (hi, hj) = (steps[i] * scale, steps[j] * scale);
        if i == j {
            Ok((at(&[(i, hi)])? - 2.0 * f0 + at(&[(i, -hi)])?) / (hi * hi))
        } else {
            let pp = at(&[(i, hi), (j, hj)])?;
            let pm = at(&[(i, hi), (j, -hj)])?;
            let mp = at(&[(i, -hi), (j, hj)])?;
            let mm = at(&[(i, -hi), (j, -hj)])?;
            Ok((pp - pm - mp + mm) / (4.0 * hi * hj))
        }
    };
    for i in 0..n {
        for j in i..n {
            let d1 = second(&mut at, i, j, 1.0)?;
            let d2 = second(&mut at, i, j, 2.0)?;
            let v = (4.0 * d1 - d2) / 3.0;
            hm[(i, j)] = v;
            hm[(j, i)] = v;
        }
    }
    check_finite(&hm)?;
    Ok(hm)
}

/// Hessian from central differences of an analytic gradient, Richardson
/// extrapolated over `h` and `2h`, then symmetrized.
pub fn hessian_from_gradient<G>(mut grad: G, x: &[f64], steps: &[f64]) -> Result<DMatrix<f64>>
where
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = x.len();
    let mut hm = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut col = |scale: f64| -> Result<Vec<f64>> {
            let h = steps[j] * scale;
            let mut y = x.to_vec();
            y[j] = x[j] + h;
            let gp = grad(&y)?;
            y[j] = x[j] - h;
            let gm = grad(&y)?;
            Ok(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect())
        };
        let c1 = col(1.0)?;
        let c2 = col(2.0)?;
        for i in 0..n {
            hm[(i, j)] = (4.0 * c1[i] - c2[i]) / 3.0;
        }
    }
    let sym = 0.5 * (&hm + hm.transpose());
    check_finite(&sym)?;
    Ok(sym)
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("finite-difference Hessian is not finite".into()));
    }
    Ok(())
}

/// Covariance from the Hessian of a log-likelihood at a maximum.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub covariance: DMatrix<f64>,
    /// Directions whose curvature was numerically zero and were projected out.
    pub null_directions: usize,
    pub min_eigenvalue: f64,
}

/// Inverts the negative Hessian `-H` of a log-likelihood.
///
/// Curvature of the wrong sign (a relative eigenvalue below `-1e-6`) is an
/// error; numerically zero eigenvalues are dropped from a pseudo-inverse.
pub fn covariance_from_hessian(h: &DMatrix<f64>) -> Result<CovarianceEstimate> {
    let info = -0.5 * (h + h.transpose());
    let eig = SymmetricEigen::new(info);
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let min_eigenvalue = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eigenvalue < -1e-6 * scale {
        return Err(Error::WrongCurvature { eigenvalue: min_eigenvalue });
    }
    let n = h.nrows();
    let mut cov = DMatrix::zeros(n, n);
    let mut null_directions = 0;
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam <= 1e-10 * scale {
            null_directions += 1;
            continue;
        }
        let v = eig.eigenvectors.column(k);
        cov += (1.0 / lam) * (&v * v.transpose());
    }
    if null_directions > 0 {
        log::warn!("information matrix has {null_directions} near-zero eigenvalue(s); using a pseudo-inverse");
    }
    let cov = 0.5 * (&cov + cov.transpose());
    Ok(CovarianceEstimate { covariance: cov, null_directions, min_eigenvalue })
}

/// Central-difference gradient of a scalar function.
pub fn numeric_gradient<F>(mut f: F, x: &[f64], steps: &[f64]) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut g = vec![0.0; x.len()];
    let mut y = x.to_vec();
    for i in 0..x.len() {
        let h = steps[i];
        y[i] = x[i] + h;
        let fp = f(&y)?;
        y[i] = x[i] - h;
        let fm = f(&y)?;
        y[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}
