//! Maximum-likelihood estimation of the filter's process parameters.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::filter::{run_filter, DiffuseInit, FilterModel, FilterOutput, MeasurementMode, Variant};
use crate::error::{Error, Result};
use crate::optim::{covariance_from_hessian, hessian_from_values, minimize, numeric_gradient, BfgsConfig};
use crate::series::TrendSeries;

#[derive(Debug, Clone)]
pub struct FilterFitConfig {
    /// Confidence level of the reported intervals.
    pub level: f64,
    pub bfgs: BfgsConfig,
    pub diffuse: DiffuseInit,
    /// A scale parameter is set to zero when dropping it costs less than
    /// this much log-likelihood.
    pub boundary_tol: f64,
}

impl Default for FilterFitConfig {
    fn default() -> Self {
        Self {
            level: 0.90,
            bfgs: BfgsConfig { max_iter: 400, grad_tol: 1e-7, rel_f_tol: 1e-12, stall_iters: 3 },
            diffuse: DiffuseInit::default(),
            boundary_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterEstimate {
    pub name: String,
    pub value: f64,
    pub ci: Option<(f64, f64)>,
    /// Estimate sits on the zero boundary; no interval is reported.
    pub boundary: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FilterFit {
    pub model: FilterModel,
    pub estimates: Vec<ParameterEstimate>,
    pub loglik: f64,
    pub output: FilterOutput,
    pub converged: bool,
    /// Set when the information matrix was singular and no intervals exist.
    pub no_ci: bool,
    pub level: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    LogScale,
    Linear,
}

struct Layout {
    names: Vec<&'static str>,
    kinds: Vec<Kind>,
}

fn layout(variant: Variant, mode: MeasurementMode) -> Layout {
    let mut names = vec!["sigma_eta"];
    let mut kinds = vec![Kind::LogScale];
    match variant {
        Variant::ZeroDrift => {}
        Variant::ConstantDrift => {
            names.push("nu");
            kinds.push(Kind::Linear);
        }
        Variant::StochasticDrift => {
            names.push("sigma_xi");
            kinds.push(Kind::LogScale);
        }
    }
    if mode == MeasurementMode::Free {
        names.push("sigma_eps");
        kinds.push(Kind::LogScale);
    }
    Layout { names, kinds }
}

fn build_model(variant: Variant, mode: MeasurementMode, diffuse: DiffuseInit, lay: &Layout, values: &[f64]) -> FilterModel {
    let mut m = FilterModel::zero_drift(0.0);
    m.variant = variant;
    m.mode = mode;
    m.diffuse = diffuse;
    for (name, &v) in lay.names.iter().zip(values) {
        match *name {
            "sigma_eta" => m.sigma_eta = v,
            "nu" => m.nu = v,
            "sigma_xi" => m.sigma_xi = v,
            _ => m.sigma_eps = v,
        }
    }
    m
}

/// Optimizes the free coordinates (`None` entries of `pinned`), scale
/// parameters on the log scale, from several starts.
struct Problem<'a> {
    series: &'a TrendSeries,
    variant: Variant,
    mode: MeasurementMode,
    diffuse: DiffuseInit,
    lay: Layout,
}

impl Problem<'_> {
    fn natural(&self, theta: &[f64], pinned: &[Option<f64>]) -> Vec<f64> {
        let mut it = theta.iter();
        pinned
            .iter()
            .zip(&self.lay.kinds)
            .map(|(p, k)| match p {
                Some(v) => *v,
                None => {
                    let t = *it.next().expect("theta covers the free coordinates");
                    if *k == Kind::LogScale {
                        t.exp()
                    } else {
                        t
                    }
                }
            })
            .collect()
    }

    fn loglik(&self, values: &[f64]) -> f64 {
        let m = build_model(self.variant, self.mode, self.diffuse, &self.lay, values);
        match run_filter(self.series, &m) {
            Ok(o) if o.loglik.is_finite() => o.loglik,
            _ => f64::NEG_INFINITY,
        }
    }

    fn optimize(&self, pinned: &[Option<f64>], starts: &[Vec<f64>], cfg: &BfgsConfig) -> Result<(Vec<f64>, f64, bool)> {
        let free: Vec<usize> = (0..pinned.len()).filter(|&i| pinned[i].is_none()).collect();
        if free.is_empty() {
            let v: Vec<f64> = pinned.iter().map(|p| p.unwrap()).collect();
            let ll = self.loglik(&v);
            return Ok((v, ll, true));
        }
        let mut best: Option<(Vec<f64>, f64, bool)> = None;
        for s in starts {
            let theta0: Vec<f64> = free
                .iter()
                .map(|&i| if self.lay.kinds[i] == Kind::LogScale { s[i].max(1e-8).ln() } else { s[i] })
                .collect();
            let neg = |th: &[f64]| -> Result<f64> {
                let ll = self.loglik(&self.natural(th, pinned));
                Ok(if ll.is_finite() { -ll } else { f64::INFINITY })
            };
            if !neg(&theta0)?.is_finite() {
                continue;
            }
            let obj = |th: &[f64]| -> Result<(f64, Vec<f64>)> {
                let f = neg(th)?;
                if !f.is_finite() {
                    return Ok((f64::INFINITY, vec![f64::NAN; th.len()]));
                }
                let g = numeric_gradient(neg, th, &vec![1e-6; th.len()])?;
                Ok((f, g))
            };
            let r = match minimize(obj, &theta0, cfg) {
                Ok(r) => r,
                Err(Error::Numeric(_)) => continue,
                Err(e) => return Err(e),
            };
            let v = self.natural(&r.x, pinned);
            let ll = -r.f;
            if best.as_ref().is_none_or(|b| ll > b.1) {
                best = Some((v, ll, r.converged));
            }
        }
        best.ok_or_else(|| Error::Numeric("filter likelihood is degenerate at every starting point".into()))
    }
}

/// Fits the variant's free parameters by maximum likelihood.
pub fn fit_filter(
    series: &TrendSeries,
    variant: Variant,
    mode: MeasurementMode,
    cfg: &FilterFitConfig,
) -> Result<FilterFit> {
    series.validate()?;
    if series.len() < 3 {
        return Err(Error::InvalidArgument("fitting the filter needs at least three observations".into()));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level {} outside (0,1)", cfg.level)));
    }
    if mode == MeasurementMode::Constrained && series.measurement_variances().is_none() {
        return Err(Error::InvalidArgument("constrained mode requires sampling variances".into()));
    }
    let lay = layout(variant, mode);
    let n = lay.names.len();
    let diffs: Vec<f64> = series.beta.windows(2).map(|w| w[1] - w[0]).collect();
    let mean_diff = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let sd = (diffs.iter().map(|d| (d - mean_diff).powi(2)).sum::<f64>() / diffs.len() as f64).sqrt();
    let scale = if sd > 0.0 { sd } else { 0.1 };

    let problem = Problem { series, variant, mode, diffuse: cfg.diffuse, lay };
    let mut starts = vec![vec![0.0; n]];
    for i in 0..n {
        let per: Vec<f64> = match problem.lay.kinds[i] {
            Kind::LogScale => vec![0.1 * scale, 0.5 * scale, 1.5 * scale],
            Kind::Linear => vec![mean_diff],
        };
        starts = starts
            .into_iter()
            .flat_map(|s| {
                per.iter().map(move |&v| {
                    let mut t = s.clone();
                    t[i] = v;
                    t
                })
            })
            .collect();
    }
    let mut pinned: Vec<Option<f64>> = vec![None; n];
    let (mut values, mut loglik, mut converged) = problem.optimize(&pinned, &starts, &cfg.bfgs)?;
    let mut warnings = Vec::new();

    // zero-boundary check for every scale parameter
    let mut boundary = vec![false; n];
    for i in 0..n {
        if problem.lay.kinds[i] != Kind::LogScale {
            continue;
        }
        let mut trial = pinned.clone();
        trial[i] = Some(0.0);
        let from_here: Vec<Vec<f64>> = std::iter::once(values.clone()).chain(starts.iter().cloned()).collect();
        let Ok((v0, ll0, c0)) = problem.optimize(&trial, &from_here, &cfg.bfgs) else { continue };
        if ll0 >= loglik - cfg.boundary_tol {
            pinned = trial;
            boundary[i] = true;
            values = v0;
            loglik = loglik.max(ll0);
            converged = c0;
        }
    }
    if !converged {
        warnings.push("optimizer did not converge".to_string());
    }

    // delta-method intervals on the optimization scale
    let active: Vec<usize> = (0..n).filter(|&i| !boundary[i]).collect();
    let theta_hat: Vec<f64> = active
        .iter()
        .map(|&i| if problem.lay.kinds[i] == Kind::LogScale { values[i].ln() } else { values[i] })
        .collect();
    let mut cis: Vec<Option<(f64, f64)>> = vec![None; n];
    let mut no_ci = false;
    if !active.is_empty() {
        let ll_at = |th: &[f64]| -> Result<f64> {
            let mut v = values.clone();
            for (k, &i) in active.iter().enumerate() {
                v[i] = if problem.lay.kinds[i] == Kind::LogScale { th[k].exp() } else { th[k] };
            }
            let ll = problem.loglik(&v);
            if ll.is_finite() {
                Ok(ll)
            } else {
                Err(Error::Numeric("log-likelihood not finite near the optimum".into()))
            }
        };
        let cov = hessian_from_values(ll_at, &theta_hat, &vec![1e-4; active.len()]).and_then(|h| covariance_from_hessian(&h));
        match cov {
            Ok(c) if c.null_directions == 0 => {
                let z = Normal::standard().inverse_cdf(0.5 + 0.5 * cfg.level);
                for (k, &i) in active.iter().enumerate() {
                    let se = c.covariance[(k, k)].sqrt();
                    let (lo, hi) = (theta_hat[k] - z * se, theta_hat[k] + z * se);
                    cis[i] = Some(if problem.lay.kinds[i] == Kind::LogScale { (lo.exp(), hi.exp()) } else { (lo, hi) });
                }
            }
            Ok(_) => {
                no_ci = true;
                warnings.push("information matrix has a zero eigenvalue; no confidence intervals".into());
            }
            Err(e) => {
                no_ci = true;
                warnings.push(format!("confidence intervals unavailable: {e}"));
            }
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let model = build_model(variant, mode, cfg.diffuse, &problem.lay, &values);
    let output = run_filter(series, &model)?;
    let estimates = (0..n)
        .map(|i| ParameterEstimate { name: problem.lay.names[i].to_string(), value: values[i], ci: cis[i], boundary: boundary[i] })
        .collect();
    Ok(FilterFit { model, estimates, loglik: output.loglik, output, converged, no_ci, level: cfg.level, warnings })
}
