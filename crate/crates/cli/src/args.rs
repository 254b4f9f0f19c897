use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use incidence_core::analysis::CoefficientMode;
use incidence_core::kalman::{DiffuseInit, MeasurementMode, Variant};
use incidence_core::trend::{DriftDistribution, VarianceEstimator};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Parses a kebab-case enum through its serde names so the library types
/// need no CLI dependency.
fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "incidence", version, about = "Two-step incidence-trend estimation and drift analysis")]
pub struct Cli {
    /// Seed for every stochastic step; required by stochastic commands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads. Changes wall time only.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON object whose keys override flags of the chosen command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Repeat for more log output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a misclassified panel.
    Simulate(SimulateArgs),
    /// Fit the hidden Markov panel model.
    FitMsm(FitMsmArgs),
    /// Fit a random-walk filter to a trend series.
    FitFilter(FitFilterArgs),
    /// Drift tests on a trend series.
    TestTrend(TestTrendArgs),
    /// Gain trajectory and fixed points.
    GainAnalysis(GainAnalysisArgs),
    /// Analytic power and size curves.
    PowerCurve(PowerCurveArgs),
    /// Collect earlier outputs into one JSON document.
    Report(ReportArgs),
    /// Check input files and list violations.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// Model JSON with parameters; the built-in synthetic cohort otherwise.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 50.0)]
    pub age_min: f64,
    #[arg(long, default_value_t = 90.0)]
    pub age_max: f64,
    #[arg(long, default_value_t = 0.55)]
    pub female_prob: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitMsmArgs {
    #[arg(long)]
    pub panel: PathBuf,
    /// Model JSON: wave times, knots, reference age, starting values.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Parameter names held at their starting values.
    #[arg(long, value_delimiter = ',')]
    pub fix: Vec<String>,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub grad_tol: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub trend_out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitFilterArgs {
    #[arg(long)]
    pub trend: PathBuf,
    #[arg(long, default_value = "zero-drift", value_parser = kebab::<Variant>)]
    pub variant: Variant,
    #[arg(long, default_value = "constrained", value_parser = kebab::<MeasurementMode>)]
    pub mode: MeasurementMode,
    #[arg(long, default_value = "exact-observation", value_parser = kebab::<DiffuseInit>)]
    pub diffuse: DiffuseInit,
    #[arg(long, default_value_t = 0.90)]
    pub level: f64,
    #[arg(long, default_value_t = 4)]
    pub horizon: usize,
    /// Ljung-Box lags.
    #[arg(long, default_value_t = 4)]
    pub lags: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub forecast_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestTrendArgs {
    #[arg(long)]
    pub trend: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub lags: usize,
    #[arg(long, default_value = "long-run", value_parser = kebab::<VarianceEstimator>)]
    pub estimator: VarianceEstimator,
    #[arg(long, default_value = "normal", value_parser = kebab::<DriftDistribution>)]
    pub distribution: DriftDistribution,
    /// Count HAC off-diagonal terms twice, as the long-run form does.
    #[arg(long)]
    pub double_offdiag: bool,
    #[arg(long, default_value_t = 1000)]
    pub grid: usize,
    #[arg(long, default_value_t = 100_000)]
    pub reps: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// `level,value` tables, written as `<stem>_bridge.csv` and `<stem>_wiener.csv`.
    #[arg(long)]
    pub critical_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainAnalysisArgs {
    /// Constant signal-to-noise ratio.
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    /// Trend JSON whose sampling variances give `s_k = σ_η²/σ_kk²`.
    #[arg(long)]
    pub trend: Option<PathBuf>,
    #[arg(long)]
    pub sigma_eta: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub fixed_point_out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerCurveArgs {
    #[arg(long, default_value_t = 1.26)]
    pub s: f64,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Exact below order 4 and asymptotic from 4 on when omitted.
    #[arg(long, value_parser = kebab::<CoefficientMode>)]
    pub mode: Option<CoefficientMode>,
    /// Largest shock magnitude in units of σ_η.
    #[arg(long, default_value_t = 3.0)]
    pub x_max: f64,
    #[arg(long, default_value_t = 61)]
    pub points: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub size_out: Option<PathBuf>,
    /// Monte Carlo replications per grid point; needs `--seed`.
    #[arg(long)]
    pub mc_reps: Option<usize>,
    #[arg(long)]
    pub mc_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateArgs {
    #[arg(long)]
    pub panel: Option<PathBuf>,
    #[arg(long)]
    pub trend: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
}
