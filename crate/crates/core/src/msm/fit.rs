//! Quasi-Newton maximum likelihood and the observed-information covariance.

use nalgebra::DMatrix;
use serde::Serialize;

use super::likelihood::PreparedPanel;
use crate::error::{Error, Result};
use crate::markov::{logit, TransitionFunctionalSpec};
use crate::optim::{
    covariance_from_hessian, hessian_from_gradient, hessian_from_values, minimize, BfgsConfig, CovarianceEstimate,
};
use crate::panel::{Panel, DEAD, DEMENTIA, HEALTHY};
use crate::series::TrendSeries;

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub bfgs: BfgsConfig,
    /// Parameter names held at their starting values.
    pub fixed: Vec<String>,
    /// Finite-difference step for the Hessian, in standardized coordinates.
    pub hessian_step: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { bfgs: BfgsConfig::default(), fixed: Vec::new(), hessian_step: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub names: Vec<String>,
    pub gamma: Vec<f64>,
    pub loglik: f64,
    /// Inverse observed information; `None` when it could not be formed.
    pub covariance: Option<DMatrix<f64>>,
    pub fixed: Vec<bool>,
    pub converged: bool,
    pub iterations: usize,
    /// Individual-transition count `sum_i (m_i - 1)`.
    pub n_transitions: usize,
    pub gradient_max_norm: f64,
    pub message: String,
    pub warnings: Vec<String>,
}

impl EstimationResult {
    pub fn standard_errors(&self) -> Vec<Option<f64>> {
        (0..self.gamma.len())
            .map(|i| self.covariance.as_ref().filter(|_| !self.fixed[i]).map(|c| c[(i, i)].max(0.0).sqrt()))
            .collect()
    }

    pub fn to_json(&self, trend: Option<&TrendSeries>) -> serde_json::Value {
        #[derive(Serialize)]
        struct Param<'a> {
            name: &'a str,
            estimate: f64,
            se: Option<f64>,
            fixed: bool,
        }
        let ses = self.standard_errors();
        let params: Vec<Param> = self
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| Param { name: n, estimate: self.gamma[i], se: ses[i], fixed: self.fixed[i] })
            .collect();
        let cov = self.covariance.as_ref().map(|c| (0..c.nrows()).map(|i| c.row(i).iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>());
        serde_json::json!({
            "parameters": params,
            "loglik": self.loglik,
            "n_transitions": self.n_transitions,
            "converged": self.converged,
            "iterations": self.iterations,
            "gradient_max_norm": self.gradient_max_norm,
            "message": self.message,
            "warnings": self.warnings,
            "covariance": cov,
            "trend": trend,
        })
    }
}

/// Starting values from crude rates: a common wave effect equal to the log
/// crude 1->2 rate, crude log mortality rates, small misclassification, and
/// the observed share of dementia at entry.
pub fn default_start(panel: &Panel, spec: &TransitionFunctionalSpec) -> Vec<f64> {
    let l = spec.layout();
    let (mut ev12, mut ev13, mut ev23, mut py1, mut py2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut entries, mut entries2) = (0.0f64, 0.0f64);
    for ind in &panel.individuals {
        entries += 1.0;
        if ind.states.first() == Some(&DEMENTIA) {
            entries2 += 1.0;
        }
        for j in 1..ind.len() {
            let w = ind.times[j] - ind.times[j - 1];
            let moved = ind.states[j] != ind.states[j - 1];
            let exposure = if moved { 0.5 * w } else { w };
            match (ind.states[j - 1], ind.states[j]) {
                (HEALTHY, DEMENTIA) => ev12 += 1.0,
                (HEALTHY, DEAD) => ev13 += 1.0,
                (DEMENTIA, DEAD) => ev23 += 1.0,
                _ => {}
            }
            match ind.states[j - 1] {
                HEALTHY => py1 += exposure,
                DEMENTIA => py2 += exposure,
                _ => {}
            }
        }
    }
    let rate = |e: f64, py: f64| (e.max(0.5) / py.max(1.0)).ln();
    let mut g = vec![0.0; l.len()];
    for i in l.beta.clone() {
        g[i] = rate(ev12, py1);
    }
    g[l.log_q13] = rate(ev13, py1);
    g[l.log_q23] = rate(ev23, py2);
    g[l.logit_e12] = logit(0.01);
    g[l.logit_e21] = logit(0.1);
    g[l.logit_initial] = logit((entries2 / entries.max(1.0)).clamp(1e-3, 0.999));
    g
}

/// Affine reparameterization `gamma = M u` that centers and scales the
/// covariate columns, folding the centering into each intensity's intercept.
struct Standardization {
    m: DMatrix<f64>,
    m_inv: DMatrix<f64>,
}

impl Standardization {
    fn new(prepared: &PreparedPanel, fixed: &[bool]) -> Self {
        let spec = prepared.spec();
        let l = spec.layout();
        let p = l.len();
        let (mut sum, mut sq, mut cnt) = (vec![0.0; p], vec![0.0; p], 0.0);
        for d in prepared.designs() {
            cnt += 1.0;
            for row in &d.rows {
                for &(j, x) in row {
                    sum[j] += x;
                    sq[j] += x * x;
                }
            }
        }
        let groups: [(Vec<usize>, Vec<usize>); 3] = [
            (
                l.beta.clone().collect(),
                std::iter::once(l.f12_female).chain(l.f12_spline.clone()).chain(l.f12_spline_female.clone()).collect(),
            ),
            (vec![l.log_q13], vec![l.f13_female, l.f13_age, l.slope13]),
            (vec![l.log_q23], vec![l.f23_female, l.f23_age, l.slope23]),
        ];
        let mut m = DMatrix::<f64>::identity(p, p);
        for (intercepts, covs) in &groups {
            let centre = !intercepts.iter().any(|&i| fixed[i]);
            for &j in covs {
                if fixed[j] || cnt == 0.0 {
                    continue;
                }
                let mean = sum[j] / cnt;
                let sd = (sq[j] / cnt - mean * mean).max(0.0).sqrt();
                let s = if sd > 1e-12 * (1.0 + mean.abs()) { sd } else { 1.0 };
                m[(j, j)] = 1.0 / s;
                if centre {
                    for &i in intercepts {
                        m[(i, j)] = -mean / s;
                    }
                }
            }
        }
        let m_inv = m.clone().try_inverse().expect("standardization map is unit-triangular up to scaling");
        Self { m, m_inv }
    }

    fn to_gamma(&self, u: &[f64]) -> Vec<f64> {
        (&self.m * nalgebra::DVector::from_column_slice(u)).iter().copied().collect()
    }

    fn to_u(&self, g: &[f64]) -> Vec<f64> {
        (&self.m_inv * nalgebra::DVector::from_column_slice(g)).iter().copied().collect()
    }

    fn grad_u(&self, gg: &[f64]) -> Vec<f64> {
        (self.m.transpose() * nalgebra::DVector::from_column_slice(gg)).iter().copied().collect()
    }
}

/// Maximizes the forward log-likelihood from `start`.
pub fn fit_msm(
    panel: &Panel,
    spec: &TransitionFunctionalSpec,
    start: &[f64],
    config: &FitConfig,
) -> Result<EstimationResult> {
    let prepared = PreparedPanel::new(panel, spec)?;
    fit_prepared(&prepared, start, config)
}

pub fn fit_prepared(prepared: &PreparedPanel, start: &[f64], config: &FitConfig) -> Result<EstimationResult> {
    let spec = prepared.spec();
    let l = spec.layout();
    let p = l.len();
    if start.len() != p {
        return Err(Error::InvalidArgument(format!("start vector has length {}, layout expects {p}", start.len())));
    }
    let mut fixed = vec![false; p];
    for name in &config.fixed {
        let i = l.index_of(name).ok_or_else(|| Error::InvalidSpec(format!("unknown parameter `{name}`")))?;
        fixed[i] = true;
    }
    let free: Vec<usize> = (0..p).filter(|&i| !fixed[i]).collect();
    let std = Standardization::new(prepared, &fixed);
    let u0 = std.to_u(start);

    let full_u = |v: &[f64]| {
        let mut u = u0.clone();
        for (k, &i) in free.iter().enumerate() {
            u[i] = v[k];
        }
        u
    };
    let objective = |v: &[f64]| -> Result<(f64, Vec<f64>)> {
        let gamma = std.to_gamma(&full_u(v));
        let (ll, g) = prepared.loglik_and_gradient(&gamma)?;
        if !ll.is_finite() {
            return Ok((f64::INFINITY, vec![f64::NAN; v.len()]));
        }
        let gu = std.grad_u(&g);
        Ok((-ll, free.iter().map(|&i| -gu[i]).collect()))
    };
    let v0: Vec<f64> = free.iter().map(|&i| u0[i]).collect();
    let opt = minimize(&objective, &v0, &config.bfgs)?;

    let step = vec![config.hessian_step; free.len()];
    let hessian_at = |x: &[f64]| {
        hessian_from_gradient(
            |v| {
                let gamma = std.to_gamma(&full_u(v));
                let (_, g) = prepared.loglik_and_gradient(&gamma)?;
                let gu = std.grad_u(&g);
                Ok(free.iter().map(|&i| gu[i]).collect())
            },
            x,
            &step,
        )
    };
    let max_abs = |g: &[f64]| g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (mut x, mut f, mut grad) = (opt.x.clone(), opt.f, opt.grad.clone());
    let mut hess = hessian_at(&x);
    let mut converged = opt.converged;
    let mut message = opt.message.clone();
    // Newton refinement: the relative-change stop can leave a gradient well
    // above the tolerance when the log-likelihood is large in magnitude.
    if let Ok(h) = &hess {
        if let Some(chol) = (-h.clone()).cholesky() {
            let mut moved = 0.0f64;
            for _ in 0..3 {
                if max_abs(&grad) < config.bfgs.grad_tol {
                    break;
                }
                // objective is -loglik, so the ascent direction solves (-H) d = -grad
                let d = chol.solve(&nalgebra::DVector::from_iterator(grad.len(), grad.iter().map(|g| -g)));
                let cand: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + b).collect();
                let (fc, gc) = objective(&cand)?;
                if !(fc.is_finite() && fc <= f + 1e-12 * f.abs() && max_abs(&gc) < max_abs(&grad)) {
                    break;
                }
                moved = moved.max(max_abs(d.as_slice()));
                x = cand;
                f = fc;
                grad = gc;
            }
            if max_abs(&grad) < config.bfgs.grad_tol {
                if !converged || opt.grad != grad {
                    message = format!("{message}; gradient tolerance after Newton refinement");
                }
                converged = true;
            }
            if moved > 10.0 * config.hessian_step {
                hess = hessian_at(&x);
            }
        }
    }
    let gamma = std.to_gamma(&full_u(&x));
    let loglik = -f;
    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!("optimizer did not converge: {message}"));
    }

    let covariance = match hess.and_then(|h| covariance_from_hessian(&h)) {
        Ok(CovarianceEstimate { covariance: cu, null_directions, .. }) => {
            if null_directions > 0 {
                warnings.push(format!("singular information matrix: {null_directions} null direction(s), pseudo-inverse used"));
            }
            let mut full = DMatrix::zeros(p, p);
            for (a, &i) in free.iter().enumerate() {
                for (b, &j) in free.iter().enumerate() {
                    full[(i, j)] = cu[(a, b)];
                }
            }
            let c = &std.m * full * std.m.transpose();
            Some(0.5 * (&c + c.transpose()))
        }
        Err(e) => {
            warnings.push(format!("covariance unavailable: {e}"));
            None
        }
    };
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(EstimationResult {
        names: l.names().to_vec(),
        gamma,
        loglik,
        covariance,
        fixed,
        converged,
        iterations: opt.iterations,
        n_transitions: prepared.n_transitions(),
        gradient_max_norm: max_abs(&grad),
        message,
        warnings,
    })
}

/// Inverse negative Hessian of `loglik` at `gamma_hat` from Richardson-extrapolated
/// central differences of function values.
pub fn hessian_covariance<F>(loglik: F, gamma_hat: &[f64], steps: &[f64]) -> Result<CovarianceEstimate>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let h = hessian_from_values(loglik, gamma_hat, steps)?;
    covariance_from_hessian(&h)
}

/// Wave-effect estimates and the matching block of the covariance.
pub fn extract_trend(result: &EstimationResult, spec: &TransitionFunctionalSpec) -> Result<TrendSeries> {
    if !result.converged {
        log::warn!("extracting the trend block from a fit that did not converge");
    }
    let t = spec.n_intervals();
    let idx = (1..=t)
        .map(|k| {
            let name = format!("beta_{k}");
            result
                .names
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| Error::InvalidSpec(format!("estimation result has no `{name}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let cov = result
        .covariance
        .as_ref()
        .ok_or_else(|| Error::Numeric("estimation result has no covariance".into()))?;
    let block = DMatrix::from_fn(t, t, |a, b| cov[(idx[a], idx[b])]);
    let mut s = TrendSeries::with_covariance(idx.iter().map(|&i| result.gamma[i]).collect(), &block)?;
    s.variances = Some((0..t).map(|k| block[(k, k)]).collect());
    s.n_transitions = Some(result.n_transitions);
    Ok(s)
}
