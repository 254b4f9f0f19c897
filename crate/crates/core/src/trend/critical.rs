//! Simulated null distributions of `∫B²` and `∫W²`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::quantile_sorted;
use crate::rng::{domain, substream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Functional {
    /// `∫ B(r)² dr`, `B` a Brownian bridge.
    BridgeSquared,
    /// `∫ W(r)² dr`, `W` a Wiener process.
    WienerSquared,
}

/// Sorted draws of both functionals from the same paths.
#[derive(Debug, Clone)]
pub struct NullDraws {
    pub n_grid: usize,
    pub reps: usize,
    pub seed: u64,
    pub bridge: Vec<f64>,
    pub wiener: Vec<f64>,
}

impl NullDraws {
    pub fn sorted(&self, f: Functional) -> &[f64] {
        match f {
            Functional::BridgeSquared => &self.bridge,
            Functional::WienerSquared => &self.wiener,
        }
    }

    /// Upper-tail probability `P(X >= x)` under the empirical distribution.
    pub fn upper_p_value(&self, f: Functional, x: f64) -> f64 {
        let d = self.sorted(f);
        let below = d.partition_point(|&v| v < x);
        (d.len() - below) as f64 / d.len() as f64
    }
}

fn one_replication(seed: u64, rep: usize, n_grid: usize) -> (f64, f64) {
    let mut rng = substream(seed, domain::CRITICAL_VALUES, rep as u64);
    let sd = (1.0 / n_grid as f64).sqrt();
    let mut w = Vec::with_capacity(n_grid);
    let mut acc = 0.0;
    for _ in 0..n_grid {
        let z: f64 = StandardNormal.sample(&mut rng);
        acc += sd * z;
        w.push(acc);
    }
    let w1 = acc;
    let n = n_grid as f64;
    let mut sw = 0.0;
    let mut sb = 0.0;
    for (i, &wi) in w.iter().enumerate() {
        let r = (i + 1) as f64 / n;
        let b = wi - r * w1;
        sw += wi * wi;
        sb += b * b;
    }
    (sb / n, sw / n)
}

/// Riemann sums on an `n_grid` grid over `reps` independent paths, each path
/// from its own substream so the result ignores thread count.
pub fn simulate_null_draws(n_grid: usize, reps: usize, seed: u64) -> Result<NullDraws> {
    if n_grid < 2 {
        return Err(Error::InvalidArgument(format!("grid size {n_grid} below 2")));
    }
    if reps < 1000 {
        return Err(Error::InvalidArgument(format!("{reps} replications; need at least 1000")));
    }
    let pairs: Vec<(f64, f64)> = (0..reps).into_par_iter().map(|r| one_replication(seed, r, n_grid)).collect();
    let (mut bridge, mut wiener): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    bridge.sort_by(f64::total_cmp);
    wiener.sort_by(f64::total_cmp);
    Ok(NullDraws { n_grid, reps, seed, bridge, wiener })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalValueTable {
    pub functional: Functional,
    pub n_grid: usize,
    pub reps: usize,
    pub seed: u64,
    /// `(level, value)` pairs in ascending level.
    pub quantiles: Vec<(f64, f64)>,
}

impl CriticalValueTable {
    pub fn from_draws(draws: &NullDraws, functional: Functional, levels: &[f64]) -> Result<Self> {
        let mut lv = levels.to_vec();
        if lv.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return Err(Error::InvalidArgument("quantile levels must lie in (0,1)".into()));
        }
        lv.sort_by(f64::total_cmp);
        let d = draws.sorted(functional);
        let quantiles = lv.iter().map(|&l| (l, quantile_sorted(d, l))).collect();
        Ok(Self { functional, n_grid: draws.n_grid, reps: draws.reps, seed: draws.seed, quantiles })
    }

    pub fn value_at(&self, level: f64) -> Option<f64> {
        self.quantiles.iter().find(|(l, _)| (*l - level).abs() < 1e-12).map(|q| q.1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,value\n");
        for (l, v) in &self.quantiles {
            s.push_str(&format!("{l:?},{v:?}\n"));
        }
        s
    }
}

pub const DEFAULT_LEVELS: [f64; 4] = [0.90, 0.95, 0.975, 0.99];

/// Quantile table of one functional.
pub fn simulate_critical_values(
    functional: Functional,
    n_grid: usize,
    reps: usize,
    seed: u64,
    levels: &[f64],
) -> Result<CriticalValueTable> {
    let draws = simulate_null_draws(n_grid, reps, seed)?;
    CriticalValueTable::from_draws(&draws, functional, levels)
}
