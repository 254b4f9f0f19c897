use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use incidence_core::analysis::{self, CoefficientMode};
use incidence_core::kalman::{self, FilterFitConfig};
use incidence_core::markov::{default_wave_times, ModelSpecFile};
use incidence_core::msm::{default_start, extract_trend, fit_msm, FitConfig};
use incidence_core::optim::BfgsConfig;
use incidence_core::panel::{validate_panel, Panel};
use incidence_core::series::TrendSeries;
use incidence_core::sim::{reference_cohort_config, simulate_panel, SimulationConfig};
use incidence_core::trend::{self, CriticalValueTable, Functional, TrendTestConfig, DEFAULT_LEVELS};
use serde_json::{json, Value};

use crate::args::*;

/// A problem with the invocation or its files; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn require_seed(seed: Option<u64>, command: &str) -> Result<u64> {
    seed.ok_or_else(|| usage(format!("`{command}` is stochastic and needs --seed")))
}

/// Every input must exist and every output directory must exist before any
/// work starts.
fn check_paths(inputs: &[&Path], outputs: &[&Path]) -> Result<()> {
    for p in inputs {
        if !p.is_file() {
            return Err(usage(format!("input file {} not found", p.display())));
        }
    }
    for p in outputs {
        let parent = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        if !parent.is_dir() {
            return Err(usage(format!("output directory {} does not exist", parent.display())));
        }
        if inputs.contains(p) {
            return Err(usage(format!("output {} would overwrite an input", p.display())));
        }
    }
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write(path, &s)
}

fn read_trend(path: &Path) -> Result<TrendSeries> {
    TrendSeries::from_json(&read(path)?).with_context(|| format!("trend series {}", path.display()))
}

fn read_model(path: &Path) -> Result<ModelSpecFile> {
    ModelSpecFile::from_json(&read(path)?).with_context(|| format!("model file {}", path.display()))
}

pub fn simulate(a: &SimulateArgs, seed: Option<u64>) -> Result<()> {
    let seed = require_seed(seed, "simulate")?;
    let inputs: Vec<&Path> = a.model.iter().map(PathBuf::as_path).collect();
    check_paths(&inputs, &[&a.out])?;
    let mut cfg = match &a.model {
        Some(p) => {
            let file = read_model(p)?;
            let spec = file.resolve(None)?;
            let params = file.parameters.as_ref().ok_or_else(|| usage("simulation model needs `parameters`"))?;
            let gamma = params.to_vector(&spec)?;
            SimulationConfig { n: a.n, spec, gamma, age_range: (0.0, 0.0), female_prob: 0.0, seed }
        }
        None => reference_cohort_config(a.n, seed),
    };
    cfg.age_range = (a.age_min, a.age_max);
    cfg.female_prob = a.female_prob;
    let panel = simulate_panel(&cfg)?;
    write(&a.out, &panel.to_csv_string())?;
    log::info!("wrote {} rows to {}", panel.n_observations(), a.out.display());
    Ok(())
}

pub fn fit_msm_cmd(a: &FitMsmArgs) -> Result<()> {
    let mut inputs = vec![a.panel.as_path()];
    inputs.extend(a.model.as_deref());
    check_paths(&inputs, &[&a.out, &a.trend_out])?;
    let panel = Panel::read_path(&a.panel)?;
    let file = match &a.model {
        Some(p) => read_model(p)?,
        None => ModelSpecFile { wave_times: default_wave_times(), knots: None, age_reference: None, parameters: None },
    };
    let spec = file.resolve(Some(&panel.interval_start_ages()))?;
    let start = match &file.parameters {
        Some(p) => p.to_vector(&spec)?,
        None => default_start(&panel, &spec),
    };
    let cfg = FitConfig {
        bfgs: BfgsConfig { max_iter: a.max_iter, grad_tol: a.grad_tol, ..BfgsConfig::default() },
        fixed: a.fix.clone(),
        ..FitConfig::default()
    };
    let result = fit_msm(&panel, &spec, &start, &cfg)?;
    let trend = extract_trend(&result, &spec)?;
    let mut doc = result.to_json(Some(&trend));
    doc["knots"] = json!(spec.knots().as_slice());
    doc["age_reference"] = json!(spec.age_reference());
    doc["wave_times"] = json!(spec.wave_times());
    write_json(&a.out, &doc)?;
    write_json(&a.trend_out, &trend)?;
    Ok(())
}

pub fn fit_filter_cmd(a: &FitFilterArgs) -> Result<()> {
    let mut outputs = vec![a.out.as_path()];
    outputs.extend(a.forecast_out.as_deref());
    check_paths(&[&a.trend], &outputs)?;
    let series = read_trend(&a.trend)?;
    let cfg = FilterFitConfig { level: a.level, diffuse: a.diffuse, ..FilterFitConfig::default() };
    let fit = kalman::fit_filter(&series, a.variant, a.mode, &cfg)?;
    let diag = kalman::diagnostics(&fit.output, a.lags);
    let fc = kalman::forecast(&fit.output, a.horizon, a.level)?;
    write_json(&a.out, &json!({ "fit": fit, "diagnostics": diag, "forecast": fc }))?;
    if let Some(p) = &a.forecast_out {
        write(p, &fc.to_csv())?;
    }
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    path.with_file_name(format!("{stem}_{suffix}{ext}"))
}

pub fn test_trend_cmd(a: &TestTrendArgs, seed: Option<u64>) -> Result<()> {
    let seed = require_seed(seed, "test-trend")?;
    let tables: Vec<PathBuf> = a
        .critical_out
        .iter()
        .flat_map(|p| [with_suffix(p, "bridge"), with_suffix(p, "wiener")])
        .collect();
    let mut outputs = vec![a.out.as_path()];
    outputs.extend(tables.iter().map(PathBuf::as_path));
    check_paths(&[&a.trend], &outputs)?;
    let series = read_trend(&a.trend)?;
    let cfg = TrendTestConfig {
        lags: a.lags,
        estimator: a.estimator,
        distribution: a.distribution,
        double_offdiag: a.double_offdiag,
        n_grid: a.grid,
        reps: a.reps,
        seed,
        alpha: a.alpha,
    };
    let draws = trend::simulate_null_draws(cfg.n_grid, cfg.reps, seed)?;
    let report = trend::run_trend_tests_with_draws(&series, &cfg, &draws)?;
    write_json(&a.out, &report)?;
    if !tables.is_empty() {
        for (f, p) in [Functional::BridgeSquared, Functional::WienerSquared].into_iter().zip(&tables) {
            write(p, &CriticalValueTable::from_draws(&draws, f, &DEFAULT_LEVELS)?.to_csv())?;
        }
    }
    Ok(())
}

pub fn gain_analysis_cmd(a: &GainAnalysisArgs) -> Result<()> {
    let inputs: Vec<&Path> = a.trend.iter().map(PathBuf::as_path).collect();
    check_paths(&inputs, &[&a.out, &a.fixed_point_out])?;
    let s: Vec<f64> = match (&a.trend, a.s) {
        (Some(p), None) => {
            let series = read_trend(p)?;
            let eta = a.sigma_eta.ok_or_else(|| usage("--trend needs --sigma-eta"))?;
            let vars = series.measurement_variances().ok_or_else(|| usage("trend series has no sampling variances"))?;
            vars.iter().map(|v| eta * eta / v).collect()
        }
        (None, Some(s)) => {
            if a.steps < 1 {
                return Err(usage("--steps must be at least 1"));
            }
            vec![s; a.steps]
        }
        _ => return Err(usage("give exactly one of --s and --trend")),
    };
    let traj = analysis::gain_sequence(&s)?;
    write(&a.out, &traj.to_csv())?;
    let mut fp = String::from("k,s,iota,nu_inf,gain_inf\n");
    for k in 0..s.len() {
        let iota = traj.iota.get(k).copied().unwrap_or(0.0);
        let p = analysis::fixed_point(s[k], iota)?;
        fp.push_str(&format!("{},{:?},{:?},{:?},{:?}\n", k + 1, p.s, p.iota, p.nu, p.gain));
    }
    write(&a.fixed_point_out, &fp)?;
    Ok(())
}

pub fn power_curve_cmd(a: &PowerCurveArgs, seed: Option<u64>) -> Result<()> {
    let mut outputs = vec![a.out.as_path()];
    outputs.extend(a.size_out.as_deref());
    outputs.extend(a.mc_out.as_deref());
    check_paths(&[], &outputs)?;
    if a.points < 2 || !(a.x_max > 0.0) {
        return Err(usage("need --points >= 2 and --x-max > 0"));
    }
    let mode = a.mode.unwrap_or_else(|| CoefficientMode::default_for(a.k));
    let grid: Vec<f64> = (0..a.points).map(|i| a.x_max * i as f64 / (a.points - 1) as f64).collect();
    let neg: Vec<f64> = grid.iter().rev().map(|&x| if x == 0.0 { 0.0 } else { -x }).collect();
    let power = analysis::power(&neg, a.k, a.s, mode)?;
    write(&a.out, &power.to_csv())?;
    if let Some(p) = &a.size_out {
        write(p, &analysis::size(&grid, a.k, a.s, mode)?.to_csv())?;
    }
    match (a.mc_reps, &a.mc_out) {
        (Some(reps), Some(p)) => {
            let seed = require_seed(seed, "power-curve --mc-reps")?;
            let mut csv = String::from("x,value,std_error\n");
            for (i, &x) in neg.iter().enumerate() {
                // one seed per grid point keeps points independent
                let mc = analysis::monte_carlo_power(a.k, a.s, x, reps, seed.wrapping_add(i as u64))?;
                csv.push_str(&format!("{x:?},{:?},{:?}\n", mc.estimate, mc.std_error));
            }
            write(p, &csv)?;
        }
        (None, None) => {}
        _ => return Err(usage("--mc-reps and --mc-out go together")),
    }
    Ok(())
}

fn csv_to_json(text: &str) -> Value {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let rows: Vec<Value> = lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let obj: serde_json::Map<String, Value> = header
                .iter()
                .zip(l.split(','))
                .map(|(h, v)| {
                    let val = v.parse::<f64>().ok().and_then(|f| serde_json::Number::from_f64(f).map(Value::Number));
                    (h.to_string(), val.unwrap_or_else(|| Value::String(v.to_string())))
                })
                .collect();
            Value::Object(obj)
        })
        .collect();
    Value::Array(rows)
}

pub fn report_cmd(a: &ReportArgs) -> Result<()> {
    let inputs: Vec<&Path> = a.inputs.iter().map(PathBuf::as_path).collect();
    check_paths(&inputs, &[&a.out])?;
    let mut doc = BTreeMap::new();
    for p in &a.inputs {
        let text = read(p)?;
        let key = p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let value = match p.extension().and_then(|e| e.to_str()) {
            Some("csv") => csv_to_json(&text),
            _ => serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?,
        };
        if doc.insert(key.clone(), value).is_some() {
            return Err(usage(format!("two inputs share the file name {key}")));
        }
    }
    write_json(&a.out, &doc)
}

/// Prints one line per violation; fails when any are found.
pub fn validate_cmd(a: &ValidateArgs) -> Result<()> {
    let inputs: Vec<&Path> = [&a.panel, &a.trend, &a.model].into_iter().flatten().map(PathBuf::as_path).collect();
    if inputs.is_empty() {
        return Err(usage("nothing to validate"));
    }
    check_paths(&inputs, &[])?;
    let mut problems = Vec::new();
    if let Some(p) = &a.panel {
        let f = fs::File::open(p)?;
        for v in validate_panel(f)? {
            problems.push(format!("{}:{v}", p.display()));
        }
    }
    if let Some(p) = &a.trend {
        if let Err(e) = TrendSeries::from_json(&read(p)?) {
            problems.push(format!("{}: {e}", p.display()));
        }
    }
    if let Some(p) = &a.model {
        match ModelSpecFile::from_json(&read(p)?) {
            Ok(m) if m.knots.is_some() => {
                if let Err(e) = m.resolve(None).and_then(|spec| match &m.parameters {
                    Some(params) => params.to_vector(&spec).map(|_| ()),
                    None => Ok(()),
                }) {
                    problems.push(format!("{}: {e}", p.display()));
                }
            }
            Ok(_) => {}
            Err(e) => problems.push(format!("{}: {e}", p.display())),
        }
    }
    for line in &problems {
        println!("{line}");
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(usage(format!("{} violation(s)", problems.len())))
    }
}
