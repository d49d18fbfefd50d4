//! Command-line front end.
//!
//! Exit codes: `0` success, `1` bad input or configuration, `2` funnel
//! violation, `3` numerical blow-up, `4` a sampled inequality check failed.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{ConfigError, ScenarioConfig};
use crate::metrics::{self, CheckFailure, CheckReport};
use crate::output::{self, MetricsFile, SweepEntry, SweepSummary};
use crate::sim::{self, RunOutcome, RunStatus, Scenario, SweepParam};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_FUNNEL: i32 = 2;
pub const EXIT_BLOWUP: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

/// Environment variable consulted when `--jobs` is absent.
pub const JOBS_ENV: &str = "DSC_PTC_JOBS";

#[derive(Debug, Parser)]
#[command(name = "dsc-ptc", version, about = "Prescribed-time adaptive dynamic surface control simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one closed-loop simulation.
    Simulate(SimulateArgs),
    /// Run one simulation per value of a parameter.
    Sweep(SweepArgs),
    /// Sample the analytic inequalities and the dynamic-signal oracle.
    Check(CheckArgs),
}

#[derive(Debug, Args)]
pub struct Overrides {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Output directory (defaults to `outputs.dir` in the scenario).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Overrides,
    #[arg(long)]
    pub sigma_bar: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Overrides,
    /// One of sigma_bar, rho_T, T, eps_decay.
    #[arg(long)]
    pub param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(&a, stdout),
        Command::Sweep(a) => sweep(&a, stdout),
        Command::Check(a) => check(&a, stdout),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_CONFIG
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

fn load(common: &Overrides) -> Result<(Scenario, ScenarioConfig), CliError> {
    let cfg = ScenarioConfig::load(&common.config)?;
    let mut scenario = cfg.to_scenario()?;
    if let Some(dt) = common.dt {
        scenario.sim.dt = dt;
    }
    if let Some(h) = common.horizon {
        scenario.sim.horizon = h;
    }
    scenario.sim.validate(scenario.gains.horizon).map_err(ConfigError::from)?;
    Ok((scenario, cfg))
}

fn status_code(status: &RunStatus) -> i32 {
    match status {
        RunStatus::Completed => EXIT_OK,
        RunStatus::FunnelViolation { .. } | RunStatus::InitialFunnelViolation => EXIT_FUNNEL,
        RunStatus::NumericalBlowup { .. } => EXIT_BLOWUP,
        RunStatus::GainBoundViolation { .. } => EXIT_CONFIG,
    }
}

fn write_outputs(dir: &Path, cfg: &ScenarioConfig, scenario: &Scenario, outcome: &RunOutcome) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))?;
    if cfg.outputs.csv {
        let path = dir.join("trajectory.csv");
        let file = fs::File::create(&path).map_err(io_err(format!("creating {}", path.display())))?;
        let mut w = io::BufWriter::new(file);
        output::write_csv(&mut w, scenario.plant.order(), scenario.plant.unmodeled_dim(), &outcome.records)
            .and_then(|_| w.flush())
            .map_err(io_err(format!("writing {}", path.display())))?;
    }
    if cfg.outputs.metrics {
        write_json(&dir.join("metrics.json"), &MetricsFile::new(scenario, outcome))?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    fs::write(path, text).map_err(io_err(format!("writing {}", path.display())))
}

fn simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let (mut scenario, cfg) = load(&args.common)?;
    if let Some(s) = args.sigma_bar {
        scenario = SweepParam::SigmaBar.apply(&scenario, s).map_err(ConfigError::from)?;
    }
    let outcome = sim::run(&scenario).map_err(ConfigError::from)?;
    let dir = args.common.out.clone().unwrap_or_else(|| cfg.outputs.dir.clone());
    write_outputs(&dir, &cfg, &scenario, &outcome)?;
    let _ = writeln!(stdout, "{} ({} records) -> {}", outcome.status.name(), outcome.records.len(), dir.display());
    Ok(status_code(&outcome.status))
}

fn value_dir_name(param: SweepParam, value: f64) -> String {
    format!("{}_{}", param.name(), value)
}

fn resolve_jobs(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(JOBS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{JOBS_ENV} must be a non-negative integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn sweep(args: &SweepArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let param = SweepParam::parse(&args.param)
        .ok_or_else(|| CliError::Usage(format!("unknown sweep parameter {:?}", args.param)))?;
    let jobs = resolve_jobs(args.jobs)?;
    let (scenario, cfg) = load(&args.common)?;
    let root = args.common.out.clone().unwrap_or_else(|| cfg.outputs.dir.clone());
    fs::create_dir_all(&root).map_err(io_err(format!("creating {}", root.display())))?;

    let results = sim::sweep(&scenario, param, &args.values, jobs);
    let mut entries = Vec::with_capacity(results.len());
    let mut worst = EXIT_OK;
    for (&value, result) in args.values.iter().zip(results) {
        let name = value_dir_name(param, value);
        let entry = match result {
            Ok(outcome) => {
                let run_scenario = param.apply(&scenario, value).map_err(ConfigError::from)?;
                write_outputs(&root.join(&name), &cfg, &run_scenario, &outcome)?;
                let m = outcome.metrics.as_ref();
                worst = worst.max(status_code(&outcome.status));
                SweepEntry {
                    value,
                    status: outcome.status.name().to_string(),
                    energy: m.map(|m| m.energy),
                    e_at_t: m.and_then(|m| m.e_at_t),
                    max_funnel_ratio: m.map(|m| m.max_funnel_ratio),
                    error: None,
                    dir: name,
                }
            }
            Err(e) => {
                worst = worst.max(EXIT_CONFIG);
                SweepEntry {
                    value,
                    status: "ConfigError".into(),
                    energy: None,
                    e_at_t: None,
                    max_funnel_ratio: None,
                    error: Some(e.to_string()),
                    dir: name,
                }
            }
        };
        let _ = writeln!(stdout, "{}={} {}", param.name(), value, entry.status);
        entries.push(entry);
    }
    write_json(&root.join("sweep_summary.json"), &SweepSummary { param: param.name().to_string(), entries })?;
    Ok(worst)
}

#[derive(Debug, Serialize)]
struct CheckOutput {
    samples: usize,
    seed: u64,
    passed: bool,
    checks: Vec<CheckReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure: Option<FailureJson>,
}

#[derive(Debug, Serialize)]
struct FailureJson {
    name: &'static str,
    detail: String,
}

/// Runs every sampled check; stops at the first violation.
pub fn run_checks(samples: usize, seed: u64) -> (Vec<CheckReport>, Option<CheckFailure>) {
    let per_axis = samples.min(1000);
    let checks: [Box<dyn Fn() -> Result<CheckReport, CheckFailure>>; 5] = [
        Box::new(|| metrics::check_lemma4(samples, seed)),
        Box::new(|| metrics::check_lemma5(samples, seed.wrapping_add(1))),
        Box::new(|| metrics::check_smoothing(samples, seed.wrapping_add(2))),
        Box::new(|| metrics::check_perf_rate(per_axis, per_axis, seed.wrapping_add(3))),
        Box::new(|| metrics::dynamic_signal_oracle(1.0, 0.625, 0.0, 10.0, 1e-3)),
    ];
    let mut reports = Vec::new();
    for c in checks {
        match c() {
            Ok(r) => reports.push(r),
            Err(f) => return (reports, Some(f)),
        }
    }
    (reports, None)
}

fn check(args: &CheckArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    if args.samples == 0 {
        return Err(CliError::Usage("--samples must be positive".into()));
    }
    let (checks, failure) = run_checks(args.samples, args.seed);
    let out = CheckOutput {
        samples: args.samples,
        seed: args.seed,
        passed: failure.is_none(),
        checks,
        failure: failure.map(|f| FailureJson { name: f.name, detail: f.detail }),
    };
    let text = serde_json::to_string_pretty(&out).expect("plain data serializes");
    writeln!(stdout, "{text}").map_err(io_err("writing stdout"))?;
    Ok(if out.passed { EXIT_OK } else { EXIT_CHECK })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_cli(std::iter::once("dsc-ptc").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn bad_arguments_exit_one() {
        assert_eq!(call(&["frobnicate"]).0, EXIT_CONFIG);
        assert_eq!(call(&["simulate"]).0, EXIT_CONFIG);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("simulate"));
    }

    #[test]
    fn zero_samples_rejected() {
        let (code, _, err) = call(&["check", "--samples", "0"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains("samples"));
    }

    #[test]
    fn check_is_deterministic() {
        let a = call(&["check", "--samples", "500", "--seed", "9"]);
        let b = call(&["check", "--samples", "500", "--seed", "9"]);
        assert_eq!(a.0, EXIT_OK, "{}", a.1);
        assert_eq!(a.1, b.1);
        let v: serde_json::Value = serde_json::from_str(&a.1).unwrap();
        assert_eq!(v["passed"], true);
    }

    #[test]
    fn unknown_sweep_param() {
        let (code, _, err) = call(&["sweep", "--config", "/nonexistent.cfg", "--param", "nope", "--values", "1"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains("nope"));
    }

    #[test]
    fn dir_names() {
        assert_eq!(value_dir_name(SweepParam::SigmaBar, 20.0), "sigma_bar_20");
        assert_eq!(value_dir_name(SweepParam::RhoT, 0.05), "rho_T_0.05");
    }
}
