//! Synthetic interval-censored, misclassified panels from a known model.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::markov::{
    expit, CovariateVector, Knots, MisclassificationMatrix, ModelParams, ModelSpecFile, TransitionFunctionalSpec,
};
use crate::panel::{Individual, Panel, DEAD, DEMENTIA, HEALTHY};
use crate::rng::{domain, substream};

/// Everything needed to generate a panel.
#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub n: usize,
    pub spec: TransitionFunctionalSpec,
    /// True parameter vector in the layout of `spec`.
    pub gamma: Vec<f64>,
    /// Baseline age is uniform on this range.
    pub age_range: (f64, f64),
    pub female_prob: f64,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("individual count must be at least 1".into()));
        }
        if self.gamma.len() != self.spec.layout().len() {
            return Err(Error::InvalidSpec(format!(
                "true parameter vector has length {}, layout expects {}",
                self.gamma.len(),
                self.spec.layout().len()
            )));
        }
        if self.gamma.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidSpec("true parameters must be finite".into()));
        }
        let (lo, hi) = self.age_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid baseline age range ({lo}, {hi})")));
        }
        if !(0.0..=1.0).contains(&self.female_prob) {
            return Err(Error::InvalidArgument(format!("female share {} outside [0,1]", self.female_prob)));
        }
        Ok(())
    }

    pub fn misclassification(&self) -> MisclassificationMatrix {
        let l = self.spec.layout();
        MisclassificationMatrix { e12: expit(self.gamma[l.logit_e12]), e21: expit(self.gamma[l.logit_e21]) }
    }
}

/// Latent states at the wave times, truncated after the first death.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPath {
    pub states: Vec<u8>,
}

/// Simulates one latent trajectory with competing exponential clocks.
///
/// Intensities are held at their interval-start values within each inter-wave
/// interval; a death is recorded at the next wave time.
pub fn simulate_individual_path<R: Rng + ?Sized>(
    spec: &TransitionFunctionalSpec,
    gamma: &[f64],
    z0: &CovariateVector,
    rng: &mut R,
) -> Result<LatentPath> {
    let times = spec.wave_times();
    let p_init = expit(gamma[spec.layout().logit_initial]);
    let mut state = if rng.random::<f64>() < p_init { DEMENTIA } else { HEALTHY };
    let mut states = Vec::with_capacity(times.len());
    states.push(state);
    for k in 1..times.len() {
        let w = times[k] - times[k - 1];
        let z = CovariateVector { age: z0.age + (times[k - 1] - times[0]), female: z0.female };
        let q = spec.design(&z, k)?.intensity(gamma)?;
        let mut left = w;
        while state != DEAD {
            let (rate, p_first) = match state {
                HEALTHY => (q.q12 + q.q13, if q.q12 + q.q13 > 0.0 { q.q12 / (q.q12 + q.q13) } else { 0.0 }),
                _ => (q.q23, 0.0),
            };
            if rate <= 0.0 {
                break;
            }
            let e: f64 = rng.sample(Exp1);
            let dt = e / rate;
            if dt >= left {
                break;
            }
            left -= dt;
            state = match state {
                HEALTHY if rng.random::<f64>() < p_first => DEMENTIA,
                _ => DEAD,
            };
        }
        states.push(state);
        if state == DEAD {
            break;
        }
    }
    Ok(LatentPath { states })
}

/// Latent panel: the true states, ids `1..=n`.
pub fn simulate_latent_panel(config: &SimulationConfig) -> Result<Panel> {
    config.validate()?;
    let times = config.spec.wave_times();
    let individuals = (0..config.n as u64)
        .into_par_iter()
        .map(|i| {
            let id = i + 1;
            let mut rng = substream(config.seed, domain::LATENT_PATH, id);
            let (lo, hi) = config.age_range;
            let age = if hi > lo { rng.random_range(lo..hi) } else { lo };
            let female = rng.random_bool(config.female_prob);
            let z0 = CovariateVector::new(age, female)?;
            let path = simulate_individual_path(&config.spec, &config.gamma, &z0, &mut rng)?;
            let m = path.states.len();
            Ok(Individual {
                id,
                female,
                times: times[..m].to_vec(),
                ages: times[..m].iter().map(|t| age + (t - times[0])).collect(),
                states: path.states,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Panel { individuals })
}

/// Misreports healthy/dementia states; death passes through unchanged.
pub fn apply_observation_scheme(latent: &Panel, e: &MisclassificationMatrix, seed: u64) -> Panel {
    let individuals = latent
        .individuals
        .par_iter()
        .map(|ind| {
            let mut rng = substream(seed, domain::OBSERVATION, ind.id);
            let states = ind
                .states
                .iter()
                .map(|&s| {
                    let u: f64 = rng.random();
                    match s {
                        HEALTHY if u < e.e12 => DEMENTIA,
                        DEMENTIA if u < e.e21 => HEALTHY,
                        other => other,
                    }
                })
                .collect();
            Individual { states, ..ind.clone() }
        })
        .collect();
    Panel { individuals }
}

pub fn simulate_panel(config: &SimulationConfig) -> Result<Panel> {
    let latent = simulate_latent_panel(config)?;
    Ok(apply_observation_scheme(&latent, &config.misclassification(), config.seed))
}

/// Crude dementia incidence per 1000 person-years from observed adjacent pairs.
///
/// Pairs starting healthy contribute the full gap at risk, or half of it when
/// they end in dementia or death.
pub fn crude_incidence_per_1000(panel: &Panel) -> f64 {
    let (mut events, mut py) = (0usize, 0.0);
    for ind in &panel.individuals {
        for j in 1..ind.len() {
            if ind.states[j - 1] != HEALTHY {
                continue;
            }
            let w = ind.times[j] - ind.times[j - 1];
            match ind.states[j] {
                HEALTHY => py += w,
                DEMENTIA => {
                    events += 1;
                    py += 0.5 * w;
                }
                _ => py += 0.5 * w,
            }
        }
    }
    1000.0 * events as f64 / py
}

/// Wave effects of the synthetic truth (log 1->2 intensity of a man aged 72):
/// a gentle decline across waves.
pub const REFERENCE_COHORT_BETA: [f64; 8] = [-5.42, -5.45, -5.50, -5.48, -5.57, -5.62, -5.60, -5.70];

/// Model file with hazards of the magnitude seen in an older English cohort:
/// dementia incidence of order 1% per year, accelerating with age, roughly
/// 5% and 20% annual mortality at 80 without and with dementia, and
/// misclassification `P(correct | healthy) = 0.996`, `P(correct | dementia) = 0.779`.
pub fn reference_cohort_model() -> ModelSpecFile {
    ModelSpecFile {
        wave_times: crate::markov::default_wave_times(),
        knots: Some(vec![60.0, 72.0, 85.0]),
        age_reference: Some(72.0),
        parameters: Some(ModelParams {
            log_q13: -3.72,
            log_q23: -2.08,
            f12_female: 0.1,
            f12_age: vec![0.12, -0.02],
            f12_age_female: Some(vec![0.0, 0.0]),
            f13_female: -0.35,
            f13_age: 0.09,
            f23_female: -0.2,
            f23_age: 0.06,
            beta: REFERENCE_COHORT_BETA.to_vec(),
            slope_13: -0.02,
            slope_23: -0.01,
            e12: 0.004,
            e21: 0.221,
            initial_dementia: 0.03,
        }),
    }
}

/// Baseline ages of the synthetic cohort.
pub const REFERENCE_COHORT_AGE_RANGE: (f64, f64) = (50.0, 90.0);

pub fn reference_cohort_config(n: usize, seed: u64) -> SimulationConfig {
    let file = reference_cohort_model();
    let knots = Knots::new(file.knots.clone().expect("reference cohort model has knots")).expect("valid knots");
    let spec = TransitionFunctionalSpec::with_age_reference(
        file.wave_times.clone(),
        knots,
        file.age_reference.expect("reference cohort model has a reference age"),
    )
    .expect("valid spec");
    let gamma = file.parameters.as_ref().expect("reference cohort model has parameters").to_vector(&spec).expect("valid");
    SimulationConfig { n, spec, gamma, age_range: REFERENCE_COHORT_AGE_RANGE, female_prob: 0.55, seed }
}
