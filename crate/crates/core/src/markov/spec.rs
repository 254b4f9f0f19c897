//! Covariate functional forms, parameter layout and intensity construction.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::expm::IntensityMatrix;
use super::spline::{fill_basis, Knots};
use crate::error::{Error, Result};

/// Covariates of one individual at a wave.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovariateVector {
    pub age: f64,
    pub female: bool,
}

impl CovariateVector {
    pub fn new(age: f64, female: bool) -> Result<Self> {
        if !(age > 0.0) || !age.is_finite() {
            return Err(Error::InvalidArgument(format!("age must be positive and finite, got {age}")));
        }
        Ok(Self { age, female })
    }

    fn female_f64(&self) -> f64 {
        if self.female {
            1.0
        } else {
            0.0
        }
    }
}

/// Default wave grid: nine biennial waves starting at 0.
pub fn default_wave_times() -> Vec<f64> {
    (0..9).map(|k| 2.0 * k as f64).collect()
}

/// Functional form of the three transition intensities.
///
/// `log q12 = f12(z) + beta_k` with the 1->2 baseline fixed at 1,
/// `log q13 = log q130 + f13(z) + slope13 * k`, and likewise for 2->3.
/// `f12` holds a female effect, a natural spline in age and the spline
/// interacted with female; `f13` and `f23` are linear in female and age.
/// `k` is the index of the wave opening the interval (1-based).
///
/// Age terms are measured from a reference age (spline values are
/// differenced against the basis at that age), so `beta_k`, `log q130` and
/// `log q230` are log-intensities of a man at the reference age.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionFunctionalSpec {
    wave_times: Vec<f64>,
    knots: Knots,
    age_reference: f64,
    reference_basis: Vec<f64>,
    layout: ParameterLayout,
}

impl TransitionFunctionalSpec {
    /// Spec with the reference age at the middle knot.
    pub fn new(wave_times: Vec<f64>, knots: Knots) -> Result<Self> {
        let t = knots.as_slice();
        let mid = if t.len() % 2 == 1 { t[t.len() / 2] } else { 0.5 * (t[t.len() / 2 - 1] + t[t.len() / 2]) };
        Self::with_age_reference(wave_times, knots, mid)
    }

    pub fn with_age_reference(wave_times: Vec<f64>, knots: Knots, age_reference: f64) -> Result<Self> {
        validate_wave_times(&wave_times)?;
        if !age_reference.is_finite() {
            return Err(Error::InvalidSpec(format!("reference age must be finite, got {age_reference}")));
        }
        let layout = ParameterLayout::new(knots.dim(), wave_times.len() - 1);
        let mut reference_basis = Vec::new();
        fill_basis(age_reference, &knots, &mut reference_basis);
        Ok(Self { wave_times, knots, age_reference, reference_basis, layout })
    }

    pub fn age_reference(&self) -> f64 {
        self.age_reference
    }

    pub fn wave_times(&self) -> &[f64] {
        &self.wave_times
    }

    pub fn knots(&self) -> &Knots {
        &self.knots
    }

    /// Number of inter-wave intervals, one wave dummy each.
    pub fn n_intervals(&self) -> usize {
        self.wave_times.len() - 1
    }

    pub fn layout(&self) -> &ParameterLayout {
        &self.layout
    }

    /// Sparse rows of the log-intensity design for one interval.
    pub fn design(&self, z: &CovariateVector, wave: usize) -> Result<IntervalDesign> {
        self.check_wave(wave)?;
        let mut basis = Vec::with_capacity(self.knots.dim());
        fill_basis(z.age, &self.knots, &mut basis);
        for (b, r) in basis.iter_mut().zip(&self.reference_basis) {
            *b -= r;
        }
        let l = &self.layout;
        let fem = z.female_f64();
        let kf = wave as f64;
        let age = z.age - self.age_reference;
        let mut r12 = Vec::with_capacity(2 + 2 * basis.len());
        r12.push((l.f12_female, fem));
        for (j, &b) in basis.iter().enumerate() {
            r12.push((l.f12_spline.start + j, b));
        }
        for (j, &b) in basis.iter().enumerate() {
            r12.push((l.f12_spline_female.start + j, b * fem));
        }
        r12.push((l.beta.start + wave - 1, 1.0));
        let r13 = vec![(l.log_q13, 1.0), (l.f13_female, fem), (l.f13_age, age), (l.slope13, kf)];
        let r23 = vec![(l.log_q23, 1.0), (l.f23_female, fem), (l.f23_age, age), (l.slope23, kf)];
        Ok(IntervalDesign { rows: [r12, r13, r23] })
    }

    fn check_wave(&self, wave: usize) -> Result<()> {
        if wave == 0 || wave > self.n_intervals() {
            return Err(Error::InvalidArgument(format!(
                "wave index {wave} outside 1..={}",
                self.n_intervals()
            )));
        }
        Ok(())
    }
}

fn validate_wave_times(t: &[f64]) -> Result<()> {
    if t.len() < 2 {
        return Err(Error::InvalidSpec("at least two wave times are required".into()));
    }
    if t.iter().any(|x| !x.is_finite()) || t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSpec(format!("wave times must be finite and strictly increasing: {t:?}")));
    }
    Ok(())
}

/// Log-intensity design of one interval as `(parameter index, value)` pairs
/// for `q12`, `q13`, `q23`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalDesign {
    pub rows: [Vec<(usize, f64)>; 3],
}

impl IntervalDesign {
    pub fn log_intensities(&self, gamma: &[f64]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().map(|&(i, x)| gamma[i] * x).sum();
        }
        out
    }

    pub fn intensity(&self, gamma: &[f64]) -> Result<IntensityMatrix> {
        let lq = self.log_intensities(gamma);
        if lq.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite log-intensity {lq:?}")));
        }
        IntensityMatrix::new(lq[0].exp(), lq[1].exp(), lq[2].exp())
    }
}

/// Fixed ordering of the parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterLayout {
    pub log_q13: usize,
    pub log_q23: usize,
    pub f12_female: usize,
    pub f12_spline: Range<usize>,
    pub f12_spline_female: Range<usize>,
    pub f13_female: usize,
    pub f13_age: usize,
    pub f23_female: usize,
    pub f23_age: usize,
    pub beta: Range<usize>,
    pub slope13: usize,
    pub slope23: usize,
    pub logit_e12: usize,
    pub logit_e21: usize,
    pub logit_initial: usize,
    names: Vec<String>,
}

impl ParameterLayout {
    fn new(spline_dim: usize, n_beta: usize) -> Self {
        let mut names: Vec<String> = Vec::new();
        let mut push = |n: String| {
            names.push(n);
            names.len() - 1
        };
        let log_q13 = push("log_q13_0".into());
        let log_q23 = push("log_q23_0".into());
        let f12_female = push("f12_female".into());
        let s0 = f12_female + 1;
        for j in 0..spline_dim {
            push(format!("f12_age_{}", j + 1));
        }
        let f12_spline = s0..s0 + spline_dim;
        for j in 0..spline_dim {
            push(format!("f12_age_female_{}", j + 1));
        }
        let f12_spline_female = f12_spline.end..f12_spline.end + spline_dim;
        let f13_female = push("f13_female".into());
        let f13_age = push("f13_age".into());
        let f23_female = push("f23_female".into());
        let f23_age = push("f23_age".into());
        for k in 0..n_beta {
            push(format!("beta_{}", k + 1));
        }
        let beta = f23_age + 1..f23_age + 1 + n_beta;
        let slope13 = push("slope_13".into());
        let slope23 = push("slope_23".into());
        let logit_e12 = push("logit_e12".into());
        let logit_e21 = push("logit_e21".into());
        let logit_initial = push("logit_initial".into());
        Self {
            log_q13,
            log_q23,
            f12_female,
            f12_spline,
            f12_spline_female,
            f13_female,
            f13_age,
            f23_female,
            f23_age,
            beta,
            slope13,
            slope23,
            logit_e12,
            logit_e21,
            logit_initial,
            names,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Builds the generator for covariates `z` over the interval opened by `wave`.
pub fn build_intensity(
    spec: &TransitionFunctionalSpec,
    gamma: &[f64],
    z: &CovariateVector,
    wave: usize,
) -> Result<IntensityMatrix> {
    if gamma.len() != spec.layout().len() {
        return Err(Error::InvalidArgument(format!(
            "parameter vector has length {}, layout expects {}",
            gamma.len(),
            spec.layout().len()
        )));
    }
    spec.design(z, wave)?.intensity(gamma)
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Named model parameters on their natural scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub log_q13: f64,
    pub log_q23: f64,
    #[serde(default)]
    pub f12_female: f64,
    /// Spline weights for the 1->2 age effect, linear term first.
    pub f12_age: Vec<f64>,
    #[serde(default)]
    pub f12_age_female: Option<Vec<f64>>,
    #[serde(default)]
    pub f13_female: f64,
    #[serde(default)]
    pub f13_age: f64,
    #[serde(default)]
    pub f23_female: f64,
    #[serde(default)]
    pub f23_age: f64,
    pub beta: Vec<f64>,
    #[serde(default)]
    pub slope_13: f64,
    #[serde(default)]
    pub slope_23: f64,
    /// P(observed 2 | true 1).
    pub e12: f64,
    /// P(observed 1 | true 2).
    pub e21: f64,
    /// P(true state 2 at first observation).
    pub initial_dementia: f64,
}

impl ModelParams {
    pub fn to_vector(&self, spec: &TransitionFunctionalSpec) -> Result<Vec<f64>> {
        let l = spec.layout();
        let dim = l.f12_spline.len();
        if self.f12_age.len() != dim {
            return Err(Error::InvalidSpec(format!(
                "f12_age has {} entries, spline needs {dim}",
                self.f12_age.len()
            )));
        }
        let age_female = self.f12_age_female.clone().unwrap_or_else(|| vec![0.0; dim]);
        if age_female.len() != dim {
            return Err(Error::InvalidSpec(format!(
                "f12_age_female has {} entries, spline needs {dim}",
                age_female.len()
            )));
        }
        if self.beta.len() != l.beta.len() {
            return Err(Error::InvalidSpec(format!(
                "beta has {} entries, the wave grid has {} intervals",
                self.beta.len(),
                l.beta.len()
            )));
        }
        for (name, p) in [("e12", self.e12), ("e21", self.e21), ("initial_dementia", self.initial_dementia)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidSpec(format!("{name} must lie strictly inside (0,1), got {p}")));
            }
        }
        let mut g = vec![0.0; l.len()];
        g[l.log_q13] = self.log_q13;
        g[l.log_q23] = self.log_q23;
        g[l.f12_female] = self.f12_female;
        g[l.f12_spline.clone()].copy_from_slice(&self.f12_age);
        g[l.f12_spline_female.clone()].copy_from_slice(&age_female);
        g[l.f13_female] = self.f13_female;
        g[l.f13_age] = self.f13_age;
        g[l.f23_female] = self.f23_female;
        g[l.f23_age] = self.f23_age;
        g[l.beta.clone()].copy_from_slice(&self.beta);
        g[l.slope13] = self.slope_13;
        g[l.slope23] = self.slope_23;
        g[l.logit_e12] = logit(self.e12);
        g[l.logit_e21] = logit(self.e21);
        g[l.logit_initial] = logit(self.initial_dementia);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("model parameters contain non-finite values".into()));
        }
        Ok(g)
    }

    pub fn from_vector(spec: &TransitionFunctionalSpec, g: &[f64]) -> Self {
        let l = spec.layout();
        Self {
            log_q13: g[l.log_q13],
            log_q23: g[l.log_q23],
            f12_female: g[l.f12_female],
            f12_age: g[l.f12_spline.clone()].to_vec(),
            f12_age_female: Some(g[l.f12_spline_female.clone()].to_vec()),
            f13_female: g[l.f13_female],
            f13_age: g[l.f13_age],
            f23_female: g[l.f23_female],
            f23_age: g[l.f23_age],
            beta: g[l.beta.clone()].to_vec(),
            slope_13: g[l.slope13],
            slope_23: g[l.slope23],
            e12: expit(g[l.logit_e12]),
            e21: expit(g[l.logit_e21]),
            initial_dementia: expit(g[l.logit_initial]),
        }
    }
}

/// On-disk model specification.
///
/// `parameters` is the truth for simulation and the starting point for
/// fitting. When `knots` is absent the 10/50/90 percentiles of the panel's
/// interval-start ages are used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpecFile {
    #[serde(default = "default_wave_times")]
    pub wave_times: Vec<f64>,
    #[serde(default)]
    pub knots: Option<Vec<f64>>,
    /// Age from which age effects are measured; defaults to the middle knot.
    #[serde(default)]
    pub age_reference: Option<f64>,
    #[serde(default)]
    pub parameters: Option<ModelParams>,
}

impl ModelSpecFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Resolves knots (explicit or from `ages`) into a validated spec.
    pub fn resolve(&self, ages: Option<&[f64]>) -> Result<TransitionFunctionalSpec> {
        let knots = match (&self.knots, ages) {
            (Some(k), _) => Knots::new(k.clone())?,
            (None, Some(a)) => Knots::from_percentiles(a)?,
            (None, None) => {
                return Err(Error::InvalidSpec("spline knots must be given when no panel is available".into()))
            }
        };
        match self.age_reference {
            Some(a) => TransitionFunctionalSpec::with_age_reference(self.wave_times.clone(), knots, a),
            None => TransitionFunctionalSpec::new(self.wave_times.clone(), knots),
        }
    }
}
