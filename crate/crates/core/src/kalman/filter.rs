//! Random-walk state-space filters with diffuse initialization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TrendSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// `beta_k = beta_{k-1} + eta_k`
    ZeroDrift,
    /// `beta_k = beta_{k-1} + nu + eta_k`
    ConstantDrift,
    /// `beta_k = beta_{k-1} + nu_{k-1} + eta_k`, `nu_k = nu_{k-1} + xi_k`
    StochasticDrift,
}

impl Variant {
    pub fn state_dim(self) -> usize {
        match self {
            Variant::StochasticDrift => 2,
            _ => 1,
        }
    }
}

/// How the measurement variance of each wave is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasurementMode {
    /// Fixed at the first-stage sampling variances.
    Constrained,
    /// One variance shared by all waves, estimated.
    Free,
}

/// Treatment of the measurement noise while the prior is diffuse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffuseInit {
    /// Diffuse-step observations are taken as exact: `P_{1|1} = 0`.
    #[default]
    ExactObservation,
    /// Exact diffuse recursion including measurement noise: `P_{1|1} = sigma_11^2`.
    NoisyObservation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterModel {
    pub variant: Variant,
    pub mode: MeasurementMode,
    pub sigma_eta: f64,
    /// Constant drift (constant-drift variant only).
    #[serde(default)]
    pub nu: f64,
    /// Drift shock scale (stochastic-drift variant only).
    #[serde(default)]
    pub sigma_xi: f64,
    /// Measurement scale (free mode only).
    #[serde(default)]
    pub sigma_eps: f64,
    #[serde(default)]
    pub diffuse: DiffuseInit,
}

impl FilterModel {
    pub fn zero_drift(sigma_eta: f64) -> Self {
        Self { variant: Variant::ZeroDrift, mode: MeasurementMode::Constrained, sigma_eta, nu: 0.0, sigma_xi: 0.0, sigma_eps: 0.0, diffuse: DiffuseInit::ExactObservation }
    }

    pub fn constant_drift(sigma_eta: f64, nu: f64) -> Self {
        Self { variant: Variant::ConstantDrift, nu, ..Self::zero_drift(sigma_eta) }
    }

    pub fn stochastic_drift(sigma_eta: f64, sigma_xi: f64) -> Self {
        Self { variant: Variant::StochasticDrift, sigma_xi, ..Self::zero_drift(sigma_eta) }
    }

    pub fn free(self, sigma_eps: f64) -> Self {
        Self { mode: MeasurementMode::Free, sigma_eps, ..self }
    }

    pub fn with_diffuse(self, diffuse: DiffuseInit) -> Self {
        Self { diffuse, ..self }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma_eta", self.sigma_eta), ("sigma_xi", self.sigma_xi), ("sigma_eps", self.sigma_eps)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !self.nu.is_finite() {
            return Err(Error::InvalidArgument("drift must be finite".into()));
        }
        Ok(())
    }

    /// Number of freely estimated parameters; supplied sampling variances do not count.
    pub fn n_params(&self) -> usize {
        let base = match self.variant {
            Variant::ZeroDrift => 1,
            Variant::ConstantDrift | Variant::StochasticDrift => 2,
        };
        base + usize::from(self.mode == MeasurementMode::Free)
    }
}

/// One filter step; vectors hold the level first and, for the
/// stochastic-drift variant, the drift second.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterStep {
    pub prior_mean: Vec<f64>,
    /// `None` while the prior is diffuse.
    pub prior_cov: Option<Vec<Vec<f64>>>,
    pub innovation: f64,
    /// `None` while the prior is diffuse.
    pub innovation_var: Option<f64>,
    pub gain: Vec<f64>,
    pub post_mean: Vec<f64>,
    pub post_cov: Vec<Vec<f64>>,
    pub measurement_var: f64,
    pub diffuse: bool,
}

impl FilterStep {
    pub fn level_gain(&self) -> f64 {
        self.gain[0]
    }

    pub fn level_post_var(&self) -> f64 {
        self.post_cov[0][0]
    }

    pub fn level_prior_var(&self) -> f64 {
        self.prior_cov.as_ref().map_or(f64::INFINITY, |p| p[0][0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterOutput {
    pub model: FilterModel,
    pub steps: Vec<FilterStep>,
    pub loglik: f64,
    pub n_diffuse: usize,
}

impl FilterOutput {
    pub fn gains(&self) -> Vec<f64> {
        self.steps.iter().map(FilterStep::level_gain).collect()
    }

    pub fn filtered_levels(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.post_mean[0]).collect()
    }

    /// `v_k / sqrt(F_k)` over the non-diffuse steps.
    pub fn standardized_residuals(&self) -> Vec<f64> {
        self.steps
            .iter()
            .filter_map(|s| s.innovation_var.map(|f| s.innovation / f.sqrt()))
            .collect()
    }
}

type M2 = [[f64; 2]; 2];

fn to_vecs(m: &M2, d: usize) -> Vec<Vec<f64>> {
    (0..d).map(|i| m[i][..d].to_vec()).collect()
}

/// Runs the filter.
///
/// The initial state is diffuse. While any state component has infinite
/// prior variance the level gain is 1 and the step adds no likelihood term
/// (one such step for the scalar variants, two for the drift state). By
/// default those observations are treated as exact, so the first posterior
/// level variance is zero; [`DiffuseInit::NoisyObservation`] keeps their
/// measurement noise instead.
pub fn run_filter(series: &TrendSeries, model: &FilterModel) -> Result<FilterOutput> {
    model.validate()?;
    series.validate()?;
    let y = &series.beta;
    let t = y.len();
    if t < 2 {
        return Err(Error::InvalidArgument("the filter needs at least two observations".into()));
    }
    let h: Vec<f64> = match model.mode {
        MeasurementMode::Constrained => series.measurement_variances().ok_or_else(|| {
            Error::InvalidArgument("constrained mode requires sampling variances for every wave".into())
        })?,
        MeasurementMode::Free => vec![model.sigma_eps * model.sigma_eps; t],
    };
    let d = model.variant.state_dim();
    let q: M2 = [[model.sigma_eta * model.sigma_eta, 0.0], [0.0, model.sigma_xi * model.sigma_xi]];
    let drift = if model.variant == Variant::ConstantDrift { model.nu } else { 0.0 };

    // prior for step 1: diffuse in every component
    let mut a = [0.0; 2];
    let mut p_inf: M2 = [[1.0, 0.0], [0.0, if d == 2 { 1.0 } else { 0.0 }]];
    let mut p_star: M2 = [[0.0; 2]; 2];
    let mut steps = Vec::with_capacity(t);
    let mut loglik = 0.0;
    let mut n_diffuse = 0;
    let ln2pi = (2.0 * std::f64::consts::PI).ln();

    for k in 0..t {
        let prior_mean = a[..d].to_vec();
        let v = y[k] - a[0];
        let f_inf = p_inf[0][0];
        let (gain, post_cov, prior_cov, innovation_var, diffuse);
        if f_inf > 1e-12 {
            diffuse = true;
            n_diffuse += 1;
            let m_inf = [p_inf[0][0], p_inf[1][0]];
            let m_star = [p_star[0][0], p_star[1][0]];
            let f_star = match model.diffuse {
                DiffuseInit::ExactObservation => p_star[0][0],
                DiffuseInit::NoisyObservation => p_star[0][0] + h[k],
            };
            let kg = [m_inf[0] / f_inf, m_inf[1] / f_inf];
            for i in 0..2 {
                a[i] += kg[i] * v;
            }
            let mut ni = p_inf;
            let mut ns = p_star;
            for i in 0..2 {
                for j in 0..2 {
                    ni[i][j] -= m_inf[i] * m_inf[j] / f_inf;
                    ns[i][j] += m_inf[i] * m_inf[j] * f_star / (f_inf * f_inf)
                        - (m_star[i] * m_inf[j] + m_inf[i] * m_star[j]) / f_inf;
                }
            }
            p_inf = ni;
            p_star = ns;
            gain = kg;
            prior_cov = None;
            innovation_var = None;
        } else {
            diffuse = false;
            let prior = p_star;
            let f = prior[0][0] + h[k];
            if !(f > 0.0) || !f.is_finite() {
                return Err(Error::DegenerateVariance { step: k + 1 });
            }
            let kg = [prior[0][0] / f, prior[1][0] / f];
            for i in 0..2 {
                a[i] += kg[i] * v;
            }
            let mut np = prior;
            for i in 0..2 {
                for j in 0..2 {
                    np[i][j] -= kg[i] * kg[j] * f;
                }
            }
            // keep the scalar identity P_{k|k} = (1 - K) P_{k|k-1} exact
            np[0][0] = (1.0 - kg[0]) * prior[0][0];
            np[1][0] = np[0][1];
            p_star = np;
            loglik -= 0.5 * (ln2pi + f.ln() + v * v / f);
            gain = kg;
            prior_cov = Some(to_vecs(&prior, d));
            innovation_var = Some(f);
        }
        post_cov = to_vecs(&p_star, d);
        steps.push(FilterStep {
            prior_mean,
            prior_cov,
            innovation: v,
            innovation_var,
            gain: gain[..d].to_vec(),
            post_mean: a[..d].to_vec(),
            post_cov,
            measurement_var: h[k],
            diffuse,
        });
        // predict the next state: a <- T a (+ drift), P <- T P T' + Q
        if d == 2 {
            a = [a[0] + a[1], a[1]];
            p_inf = transition(&p_inf);
            p_star = transition(&p_star);
        } else {
            a[0] += drift;
        }
        for i in 0..d {
            p_star[i][i] += q[i][i];
        }
    }
    Ok(FilterOutput { model: *model, steps, loglik, n_diffuse })
}

fn transition(p: &M2) -> M2 {
    // T = [[1,1],[0,1]]
    let a = p[0][0] + p[0][1] + p[1][0] + p[1][1];
    let b = p[0][1] + p[1][1];
    let c = p[1][0] + p[1][1];
    [[a, b], [c, p[1][1]]]
}
