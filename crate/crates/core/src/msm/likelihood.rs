//! Forward-algorithm likelihood of the hidden 3-state chain.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::markov::{closed_form, expit, CovariateVector, IntensityMatrix, IntervalDesign, TransitionFunctionalSpec};
use crate::panel::{Individual, Panel, DEAD};

/// One observed interval with its design precomputed.
#[derive(Debug, Clone)]
struct Interval {
    design: IntervalDesign,
    width: f64,
    /// Observed state at the right endpoint, 0-based.
    obs: usize,
}

#[derive(Debug, Clone)]
struct PreparedIndividual {
    first_obs: usize,
    intervals: Vec<Interval>,
}

/// Panel bound to a model spec, ready for repeated likelihood evaluation.
#[derive(Debug, Clone)]
pub struct PreparedPanel {
    spec: TransitionFunctionalSpec,
    individuals: Vec<PreparedIndividual>,
    n_transitions: usize,
}

/// Wave dummy for an interval starting at `t`: the last wave time not after `t`.
fn wave_of(spec: &TransitionFunctionalSpec, t: f64) -> Option<usize> {
    let times = spec.wave_times();
    let tol = 1e-9 * (1.0 + t.abs());
    let k = times.iter().take_while(|&&w| w <= t + tol).count();
    (k >= 1 && k <= spec.n_intervals()).then_some(k)
}

fn prepare_individual(spec: &TransitionFunctionalSpec, ind: &Individual, checked: bool) -> Result<PreparedIndividual> {
    if ind.is_empty() {
        return Err(Error::DataValidation(format!("id {} has no observations", ind.id)));
    }
    let mut intervals = Vec::with_capacity(ind.len() - 1);
    for j in 1..ind.len() {
        if checked && ind.states[j - 1] == DEAD {
            return Err(Error::DataValidation(format!("id {} has an observation after death", ind.id)));
        }
        let (t0, t1) = (ind.times[j - 1], ind.times[j]);
        if !(t1 > t0) {
            return Err(Error::DataValidation(format!("id {} times not strictly increasing", ind.id)));
        }
        let k = wave_of(spec, t0).ok_or_else(|| {
            Error::DataValidation(format!("id {}: interval starting at time {t0} lies outside the wave grid", ind.id))
        })?;
        let z = CovariateVector::new(ind.ages[j - 1], ind.female)?;
        intervals.push(Interval { design: spec.design(&z, k)?, width: t1 - t0, obs: state_index(ind.states[j])? });
    }
    Ok(PreparedIndividual { first_obs: state_index(ind.states[0])?, intervals })
}

fn state_index(s: u8) -> Result<usize> {
    match s {
        1..=3 => Ok(s as usize - 1),
        _ => Err(Error::DataValidation(format!("state {s} outside {{1,2,3}}"))),
    }
}

impl PreparedPanel {
    pub fn new(panel: &Panel, spec: &TransitionFunctionalSpec) -> Result<Self> {
        if !panel.individuals.iter().any(|i| i.len() >= 2) {
            return Err(Error::DataValidation("panel needs at least one individual with two observations".into()));
        }
        let individuals = panel
            .individuals
            .par_iter()
            .map(|ind| prepare_individual(spec, ind, true))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { spec: spec.clone(), individuals, n_transitions: panel.n_transitions() })
    }

    pub fn spec(&self) -> &TransitionFunctionalSpec {
        &self.spec
    }

    pub fn n_transitions(&self) -> usize {
        self.n_transitions
    }

    pub(crate) fn designs(&self) -> impl Iterator<Item = &IntervalDesign> {
        self.individuals.iter().flat_map(|i| i.intervals.iter().map(|iv| &iv.design))
    }

    /// Per-individual log-likelihoods in panel order.
    pub fn individual_logliks(&self, gamma: &[f64]) -> Result<Vec<f64>> {
        self.check_len(gamma)?;
        let model = Emission::new(&self.spec, gamma);
        self.individuals.par_iter().map(|ind| forward_value(ind, gamma, &model)).collect()
    }

    pub fn loglik(&self, gamma: &[f64]) -> Result<f64> {
        // collected then summed in order so the total does not depend on scheduling
        Ok(self.individual_logliks(gamma)?.iter().sum())
    }

    pub fn loglik_and_gradient(&self, gamma: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_len(gamma)?;
        let model = Emission::new(&self.spec, gamma);
        let parts = self
            .individuals
            .par_iter()
            .map(|ind| forward_with_gradient(ind, gamma, &model, &self.spec))
            .collect::<Result<Vec<_>>>()?;
        let mut ll = 0.0;
        let mut grad = vec![0.0; gamma.len()];
        for (v, g) in parts {
            ll += v;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        Ok((ll, grad))
    }

    fn check_len(&self, gamma: &[f64]) -> Result<()> {
        if gamma.len() != self.spec.layout().len() {
            return Err(Error::InvalidArgument(format!(
                "parameter vector has length {}, layout expects {}",
                gamma.len(),
                self.spec.layout().len()
            )));
        }
        Ok(())
    }
}

/// Log-likelihood of the whole panel.
pub fn forward_loglik(panel: &Panel, spec: &TransitionFunctionalSpec, gamma: &[f64]) -> Result<f64> {
    PreparedPanel::new(panel, spec)?.loglik(gamma)
}

/// Likelihood of any observed sequence, including ones the data checks
/// would reject (such as rows after death, which get probability zero).
pub fn sequence_likelihood(spec: &TransitionFunctionalSpec, gamma: &[f64], ind: &Individual) -> Result<f64> {
    let prepared = prepare_individual(spec, ind, false)?;
    Ok(forward_value(&prepared, gamma, &Emission::new(spec, gamma))?.exp())
}

/// Initial distribution and emission probabilities with their logit slopes.
struct Emission {
    pi: [f64; 3],
    e12: f64,
    e21: f64,
    d_init: f64,
    d_e12: f64,
    d_e21: f64,
    idx_init: usize,
    idx_e12: usize,
    idx_e21: usize,
}

impl Emission {
    fn new(spec: &TransitionFunctionalSpec, gamma: &[f64]) -> Self {
        let l = spec.layout();
        let p = expit(gamma[l.logit_initial]);
        let e12 = expit(gamma[l.logit_e12]);
        let e21 = expit(gamma[l.logit_e21]);
        Self {
            pi: [1.0 - p, p, 0.0],
            e12,
            e21,
            d_init: p * (1.0 - p),
            d_e12: e12 * (1.0 - e12),
            d_e21: e21 * (1.0 - e21),
            idx_init: l.logit_initial,
            idx_e12: l.logit_e12,
            idx_e21: l.logit_e21,
        }
    }

    /// `P(observed o | true s)` for each true state `s`.
    fn column(&self, o: usize) -> [f64; 3] {
        match o {
            0 => [1.0 - self.e12, self.e21, 0.0],
            1 => [self.e12, 1.0 - self.e21, 0.0],
            _ => [0.0, 0.0, 1.0],
        }
    }

    /// Derivatives of [`Self::column`] in the e12 and e21 logits.
    fn column_slopes(&self, o: usize) -> ([f64; 3], [f64; 3]) {
        match o {
            0 => ([-self.d_e12, 0.0, 0.0], [0.0, self.d_e21, 0.0]),
            1 => ([self.d_e12, 0.0, 0.0], [0.0, -self.d_e21, 0.0]),
            _ => ([0.0; 3], [0.0; 3]),
        }
    }
}

fn intensities(design: &IntervalDesign, gamma: &[f64]) -> Result<IntensityMatrix> {
    design.intensity(gamma)
}

fn forward_value(ind: &PreparedIndividual, gamma: &[f64], m: &Emission) -> Result<f64> {
    let em = m.column(ind.first_obs);
    let mut alpha = [m.pi[0] * em[0], m.pi[1] * em[1], m.pi[2] * em[2]];
    let mut ll = 0.0;
    let c: f64 = alpha.iter().sum();
    if c <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    ll += c.ln();
    alpha.iter_mut().for_each(|a| *a /= c);
    for iv in &ind.intervals {
        let q = intensities(&iv.design, gamma)?;
        let p = closed_form(&q, iv.width).0.p;
        let em = m.column(iv.obs);
        let mut next = [0.0; 3];
        for (s, n) in next.iter_mut().enumerate() {
            *n = (0..3).map(|r| alpha[r] * p[r][s]).sum::<f64>() * em[s];
        }
        let c: f64 = next.iter().sum();
        if c <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        ll += c.ln();
        alpha = next.map(|v| v / c);
    }
    Ok(ll)
}

/// Scaled forward pass carrying tangents of the normalized state weights.
fn forward_with_gradient(
    ind: &PreparedIndividual,
    gamma: &[f64],
    m: &Emission,
    spec: &TransitionFunctionalSpec,
) -> Result<(f64, Vec<f64>)> {
    let np = spec.layout().len();
    let mut grad = vec![0.0; np];
    // dalpha[s][j]
    let mut dalpha = vec![[0.0; 3]; np];
    let mut dnext = vec![[0.0; 3]; np];

    let em = m.column(ind.first_obs);
    let (de12, de21) = m.column_slopes(ind.first_obs);
    let mut a = [m.pi[0] * em[0], m.pi[1] * em[1], 0.0];
    dnext.iter_mut().for_each(|d| *d = [0.0; 3]);
    for s in 0..3 {
        let dpi = if s == 0 { -m.d_init } else if s == 1 { m.d_init } else { 0.0 };
        dnext[m.idx_init][s] = dpi * em[s];
        dnext[m.idx_e12][s] = m.pi[s] * de12[s];
        dnext[m.idx_e21][s] = m.pi[s] * de21[s];
    }
    let mut ll = 0.0;
    let c: f64 = a.iter().sum();
    if c <= 0.0 {
        return Ok((f64::NEG_INFINITY, grad));
    }
    normalize(&mut a, &mut dalpha, &dnext, c, &mut ll, &mut grad);

    for iv in &ind.intervals {
        let q = intensities(&iv.design, gamma)?;
        let (tm, dq) = closed_form(&q, iv.width);
        let p = tm.p;
        let qv = [q.q12, q.q13, q.q23];
        let em = m.column(iv.obs);
        let (de12, de21) = m.column_slopes(iv.obs);

        let mut next = [0.0; 3];
        let mut pred = [0.0; 3];
        for s in 0..3 {
            pred[s] = (0..3).map(|r| a[r] * p[r][s]).sum::<f64>();
            next[s] = pred[s] * em[s];
        }
        for (j, d) in dnext.iter_mut().enumerate() {
            let da = &dalpha[j];
            for s in 0..3 {
                d[s] = (da[0] * p[0][s] + da[1] * p[1][s] + da[2] * p[2][s]) * em[s];
            }
        }
        for s in 0..3 {
            dnext[m.idx_e12][s] += pred[s] * de12[s];
            dnext[m.idx_e21][s] += pred[s] * de21[s];
        }
        // transition parameters enter through log q = design row . gamma
        for (mi, row) in iv.design.rows.iter().enumerate() {
            let dpm = &dq[mi];
            let mut dpred = [0.0; 3];
            for (s, dp) in dpred.iter_mut().enumerate() {
                *dp = (0..3).map(|r| a[r] * dpm[r][s]).sum::<f64>() * qv[mi] * em[s];
            }
            for &(j, x) in row {
                for s in 0..3 {
                    dnext[j][s] += dpred[s] * x;
                }
            }
        }
        let c: f64 = next.iter().sum();
        if c <= 0.0 {
            return Ok((f64::NEG_INFINITY, grad));
        }
        a = next;
        normalize(&mut a, &mut dalpha, &dnext, c, &mut ll, &mut grad);
    }
    Ok((ll, grad))
}

fn normalize(a: &mut [f64; 3], dalpha: &mut [[f64; 3]], dnext: &[[f64; 3]], c: f64, ll: &mut f64, grad: &mut [f64]) {
    *ll += c.ln();
    a.iter_mut().for_each(|v| *v /= c);
    for (j, (da, dn)) in dalpha.iter_mut().zip(dnext).enumerate() {
        let dc = dn[0] + dn[1] + dn[2];
        grad[j] += dc / c;
        for s in 0..3 {
            da[s] = (dn[s] - a[s] * dc) / c;
        }
    }
}
