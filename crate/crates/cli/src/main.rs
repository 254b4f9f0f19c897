mod args;
mod commands;
mod config;

use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;

use args::{Cli, Command};

/// 1 for bad input, 2 for numerical failure.
fn exit_status(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<incidence_core::Error>() {
            return if e.is_validation() { 1 } else { 2 };
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    let overrides = match &cli.config {
        Some(p) => config::load(p)?,
        None => Default::default(),
    };
    let seed = match overrides.get("seed") {
        Some(v) => Some(v.as_u64().ok_or_else(|| commands::UsageError("config `seed` must be a non-negative integer".into()))?),
        None => cli.seed,
    };
    let threads = match overrides.get("threads") {
        Some(v) => Some(v.as_u64().ok_or_else(|| commands::UsageError("config `threads` must be a positive integer".into()))? as usize),
        None => cli.threads,
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(commands::UsageError("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let o = &overrides;
    match cli.command {
        Command::Simulate(a) => commands::simulate(&config::overlay(a, o)?, seed),
        Command::FitMsm(a) => commands::fit_msm_cmd(&config::overlay(a, o)?),
        Command::FitFilter(a) => commands::fit_filter_cmd(&config::overlay(a, o)?),
        Command::TestTrend(a) => commands::test_trend_cmd(&config::overlay(a, o)?, seed),
        Command::GainAnalysis(a) => commands::gain_analysis_cmd(&config::overlay(a, o)?),
        Command::PowerCurve(a) => commands::power_curve_cmd(&config::overlay(a, o)?, seed),
        Command::Report(a) => commands::report_cmd(&config::overlay(a, o)?),
        Command::Validate(a) => commands::validate_cmd(&config::overlay(a, o)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_status(&e);
            let kind = if code == 2 { "numeric" } else { "validation" };
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error kind={kind} message=\"{}\"", msg.replace('"', "'"));
            ExitCode::from(code)
        }
    }
}
