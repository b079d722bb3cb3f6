//! Command-line front end: flag/scenario resolution and the five
//! subcommands. Flags override scenario-file values; anything still
//! missing after the merge is reported as a validation error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::analysis::{self, FitsArtifact, RunTracks, SweepSummary};
use crate::dynamics::{DecayRates, InitialKind};
use crate::error::{Error, Result};
use crate::integrator::SolverConfig;
use crate::io;
use crate::oracle;
use crate::runner::{self, RunParams, SweepArtifact, TMaxRequest};

/// Scenario file: JSON with the same knobs as the flags. Unknown keys are
/// rejected so a typo cannot silently fall back to a default.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    pub n_values: Option<NValues>,
    pub init: Option<String>,
    pub solver: Option<SolverSection>,
    pub output_dir: Option<PathBuf>,
    pub raw_eq2_intensity: Option<bool>,
    pub synthesis_completion_fraction: Option<f64>,
}

/// Explicit list of N values or an inclusive range with a step.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum NValues {
    List(Vec<u32>),
    Range(NRange),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NRange {
    pub min: u32,
    pub max: u32,
    pub step: u32,
}

impl NValues {
    pub fn expand(&self) -> Result<Vec<u32>> {
        match self {
            NValues::List(values) => {
                if values.is_empty() {
                    return Err(Error::validation("n_values list is empty"));
                }
                Ok(values.clone())
            }
            NValues::Range(range) => expand_range(range.min, range.max, range.step),
        }
    }
}

fn expand_range(min: u32, max: u32, step: u32) -> Result<Vec<u32>> {
    if step == 0 {
        return Err(Error::validation("N step must be positive"));
    }
    if min > max {
        return Err(Error::validation(format!("N range is empty: min {min} > max {max}")));
    }
    Ok((min..=max).step_by(step as usize).collect())
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub t_max: Option<TMaxRequest>,
    pub completion_epsilon: Option<f64>,
    pub sample_count: Option<usize>,
}

fn load_scenario(path: Option<&Path>) -> Result<ScenarioFile> {
    let Some(path) = path else {
        return Ok(ScenarioFile::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| {
        Error::validation(format!("{}: invalid scenario: {e}", path.display()))
    })
}

#[derive(Parser, Debug)]
#[command(
    name = "superradiance",
    version,
    about = "Two-mode superradiance simulator for ensembles of V-type three-level atoms"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one scenario and write its time series and summary
    Simulate(SimulateArgs),
    /// Run a scenario across many N in parallel and consolidate the results
    Sweep(SweepArgs),
    /// Reduce a sweep directory to scaling fits, noise minima, and surfaces
    Analyze(AnalyzeArgs),
    /// Time the two-mode emission against the sequential cascade estimate
    Synthesis(SynthesisArgs),
    /// Cross-check the integrator against independent reference solutions
    Verify(VerifyArgs),
}

/// Flags shared by every run-producing subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct PhysicsArgs {
    /// Scenario file supplying defaults for any flag not given
    #[arg(long, value_name = "FILE")]
    pub scenario: Option<PathBuf>,

    /// Decay rate of transition 1
    #[arg(long)]
    pub gamma1: Option<f64>,

    /// Decay rate of transition 2
    #[arg(long)]
    pub gamma2: Option<f64>,

    /// Initial condition: v-standard, two-level-conventional, or
    /// two-level-unconventional
    #[arg(long)]
    pub init: Option<String>,

    /// Relative tolerance of the adaptive integrator
    #[arg(long)]
    pub rel_tol: Option<f64>,

    /// Absolute tolerance of the adaptive integrator
    #[arg(long)]
    pub abs_tol: Option<f64>,

    /// Integration horizon: a time, or "auto" to estimate from N and rates
    #[arg(long, value_name = "TIME|auto")]
    pub t_max: Option<String>,

    /// Stop early once the unsettled probability falls below this (0 keeps
    /// integrating to the horizon)
    #[arg(long)]
    pub completion_epsilon: Option<f64>,

    /// Number of uniformly spaced output samples
    #[arg(long)]
    pub samples: Option<usize>,

    /// Report bare cooperative emission sums instead of rate-weighted ones
    #[arg(long)]
    pub raw_eq2_intensity: bool,
}

/// Fully resolved run configuration after merging flags over the scenario.
#[derive(Debug, Clone)]
struct Resolved {
    rates: DecayRates,
    init: InitialKind,
    solver: SolverConfig,
    raw_intensity: bool,
    scenario: ScenarioFile,
}

impl Resolved {
    fn base_params(&self, n_half: u32) -> RunParams {
        RunParams {
            n_half,
            rates: self.rates.clone(),
            init: self.init.clone(),
            solver: self.solver.clone(),
            raw_intensity: self.raw_intensity,
        }
    }
}

fn resolve(physics: &PhysicsArgs) -> Result<Resolved> {
    let scenario = load_scenario(physics.scenario.as_deref())?;
    let gamma1 = physics
        .gamma1
        .or(scenario.gamma1)
        .ok_or_else(|| Error::validation("gamma1 is required (flag or scenario file)"))?;
    let gamma2 = physics
        .gamma2
        .or(scenario.gamma2)
        .ok_or_else(|| Error::validation("gamma2 is required (flag or scenario file)"))?;
    let rates = DecayRates::new(gamma1, gamma2)?;

    let init = match physics.init.as_deref().or(scenario.init.as_deref()) {
        Some(name) => InitialKind::parse_named(name)?,
        None => InitialKind::VStandard,
    };

    let file_solver = scenario.solver.clone().unwrap_or_default();
    let t_max = match &physics.t_max {
        Some(text) if text == "auto" => None,
        Some(text) => Some(text.parse::<f64>().map_err(|_| {
            Error::validation(format!("--t-max must be a time or \"auto\", got \"{text}\""))
        })?),
        None => match &file_solver.t_max {
            Some(request) => request.resolve()?,
            None => None,
        },
    };
    let defaults = SolverConfig::default();
    let solver = SolverConfig {
        rel_tol: physics.rel_tol.or(file_solver.rel_tol).unwrap_or(defaults.rel_tol),
        abs_tol: physics.abs_tol.or(file_solver.abs_tol).unwrap_or(defaults.abs_tol),
        t_max,
        completion_epsilon: physics
            .completion_epsilon
            .or(file_solver.completion_epsilon)
            .unwrap_or(defaults.completion_epsilon),
        sample_count: physics
            .samples
            .or(file_solver.sample_count)
            .unwrap_or(defaults.sample_count),
        ..defaults
    };
    solver.validate()?;

    let raw_intensity =
        physics.raw_eq2_intensity || scenario.raw_eq2_intensity.unwrap_or(false);
    Ok(Resolved { rates, init, solver, raw_intensity, scenario })
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub physics: PhysicsArgs,

    /// Number of atoms per species (the system holds 2N atoms)
    #[arg(long)]
    pub n: Option<u32>,

    /// Directory receiving the run CSV and summary JSON
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub physics: PhysicsArgs,

    /// Smallest N of the sweep range
    #[arg(long)]
    pub n_min: Option<u32>,

    /// Largest N of the sweep range (inclusive)
    #[arg(long)]
    pub n_max: Option<u32>,

    /// Step between successive N values
    #[arg(long)]
    pub n_step: Option<u32>,

    /// Directory receiving per-run artifacts and the consolidated summary
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    /// Worker threads (default: machine parallelism)
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Directory holding sweep_summary.json and the per-run CSVs
    #[arg(long, value_name = "DIR")]
    pub sweep_dir: PathBuf,

    /// Directory receiving fits.json, sigma_minima.csv, and surface.csv
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,

    /// Add a surface column with times shifted by alpha * tau_D(N)
    #[arg(long, value_name = "ALPHA")]
    pub alpha_offset: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SynthesisArgs {
    #[command(flatten)]
    pub physics: PhysicsArgs,

    /// Number of atoms per species
    #[arg(long)]
    pub n: Option<u32>,

    /// Fraction of the 2N photon budget whose emission marks completion
    #[arg(long)]
    pub completion_fraction: Option<f64>,

    /// Write the timing report as JSON
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Largest N to cross-check against the dense reference
    #[arg(long, default_value_t = 5)]
    pub max_n: u32,

    /// Largest tolerated production-vs-reference deviation
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,

    /// Write the battery report as JSON
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,

    /// Multiply one production rate by 1.1 before comparing; the battery
    /// must then fail (negative control)
    #[arg(long, hide = true)]
    pub inject_rate_bug: bool,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Synthesis(args) => cmd_synthesis(args),
        Command::Verify(args) => cmd_verify(args),
    }
}

fn required_out_dir(flag: Option<PathBuf>, scenario: &ScenarioFile) -> Result<PathBuf> {
    flag.or_else(|| scenario.output_dir.clone())
        .ok_or_else(|| Error::validation("--out-dir is required (flag or scenario output_dir)"))
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let resolved = resolve(&args.physics)?;
    let n_half = match (args.n, &resolved.scenario.n_values) {
        (Some(n), _) => n,
        (None, Some(values)) => {
            let expanded = values.expand()?;
            if expanded.len() != 1 {
                return Err(Error::validation(format!(
                    "scenario lists {} N values; use the sweep subcommand or pass --n",
                    expanded.len()
                )));
            }
            expanded[0]
        }
        (None, None) => return Err(Error::validation("--n is required (flag or scenario)")),
    };
    let out_dir = required_out_dir(args.out_dir, &resolved.scenario)?;

    let artifacts = runner::execute_run(&resolved.base_params(n_half))?;
    let (csv_path, json_path) = runner::write_run_artifacts(&out_dir, &artifacts)?;
    println!(
        "N={n_half} gamma=({},{}) init={}: {} at t_end={:.6e}",
        resolved.rates.gamma1(),
        resolved.rates.gamma2(),
        resolved.init.name(),
        if artifacts.summary.completed { "completed" } else { "hit the horizon" },
        artifacts.summary.t_end,
    );
    println!("wrote {}", csv_path.display());
    println!("wrote {}", json_path.display());
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let resolved = resolve(&args.physics)?;
    let any_range_flag =
        args.n_min.is_some() || args.n_max.is_some() || args.n_step.is_some();
    let n_values = if any_range_flag {
        let min = args
            .n_min
            .ok_or_else(|| Error::validation("--n-min is required with range flags"))?;
        let max = args
            .n_max
            .ok_or_else(|| Error::validation("--n-max is required with range flags"))?;
        expand_range(min, max, args.n_step.unwrap_or(1))?
    } else if let Some(values) = &resolved.scenario.n_values {
        values.expand()?
    } else {
        return Err(Error::validation(
            "sweep needs N values: --n-min/--n-max/--n-step or scenario n_values",
        ));
    };
    let out_dir = required_out_dir(args.out_dir, &resolved.scenario)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::validation(format!("cannot build thread pool: {e}")))?;
    let base = resolved.base_params(0);
    let outcome = pool.install(|| runner::execute_sweep(&base, &n_values, &out_dir))?;

    for record in &outcome.artifact.records {
        println!(
            "N={}: area1={:.6}, area2={:.6}",
            record.n_half, record.area1_inf, record.area2_inf
        );
    }
    println!(
        "wrote {} runs to {}",
        outcome.artifact.records.len(),
        out_dir.display()
    );
    if !outcome.artifact.failed.is_empty() {
        let ns: Vec<String> = outcome
            .artifact
            .failed
            .iter()
            .map(|f| f.n_half.to_string())
            .collect();
        return Err(Error::numerical(format!(
            "{} of {} runs failed (N = {}); see sweep_summary.json",
            outcome.artifact.failed.len(),
            n_values.len(),
            ns.join(", ")
        )));
    }
    Ok(())
}

/// Reading an input produced by an earlier stage: absence or corruption is
/// the caller handing us a bad argument, not an I/O fault of this process.
fn as_bad_input(err: Error) -> Error {
    match err {
        Error::Io { path, source } => {
            Error::validation(format!("{path}: cannot read sweep input: {source}"))
        }
        Error::Format { path, reason } => {
            Error::validation(format!("{path}: corrupt sweep input: {reason}"))
        }
        other => other,
    }
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let summary_path = args.sweep_dir.join("sweep_summary.json");
    let artifact: SweepArtifact = io::read_json(&summary_path).map_err(as_bad_input)?;
    if artifact.records.is_empty() {
        return Err(Error::validation(format!(
            "{}: sweep has no successful runs to analyze",
            summary_path.display()
        )));
    }

    let sweep = SweepSummary::from_records(artifact.records.clone());
    let fits = analysis::criteria_battery(&sweep)?;
    io::write_json(&args.out_dir.join("fits.json"), &FitsArtifact { fits: fits.clone() })?;
    io::write_sigma_minima_csv(&args.out_dir.join("sigma_minima.csv"), &sweep.records)?;

    let mut tracks: Vec<RunTracks> = Vec::with_capacity(sweep.records.len());
    for record in &sweep.records {
        let csv_path = args
            .sweep_dir
            .join(format!("{}.csv", runner::run_file_stem(record.n_half)));
        let run_csv = io::read_run_csv(&csv_path).map_err(as_bad_input)?;
        tracks.push(run_csv.tracks(record.n_half));
    }
    let surface = analysis::normalized_surface(&tracks, args.alpha_offset)?;
    io::write_surface_csv(&args.out_dir.join("surface.csv"), &surface)?;

    for fit in &fits {
        println!(
            "{} vs {}: slope={:.6}, intercept={:.6e}, R^2={:.6}",
            fit.y_label, fit.x_label, fit.slope, fit.intercept, fit.r_squared
        );
    }
    println!("wrote fits.json, sigma_minima.csv, surface.csv to {}", args.out_dir.display());
    Ok(())
}

fn cmd_synthesis(args: SynthesisArgs) -> Result<()> {
    let resolved = resolve(&args.physics)?;
    if resolved.init != InitialKind::VStandard {
        return Err(Error::validation(
            "synthesis timing is defined for the v-standard start; drop --init",
        ));
    }
    if resolved.rates.gamma2() <= 0.0 {
        return Err(Error::validation(
            "synthesis needs gamma2 > 0: the cascade comparison divides by it",
        ));
    }
    let n_half = match (args.n, &resolved.scenario.n_values) {
        (Some(n), _) => n,
        (None, Some(values)) => {
            let expanded = values.expand()?;
            if expanded.len() != 1 {
                return Err(Error::validation("synthesis runs a single N; pass --n"));
            }
            expanded[0]
        }
        (None, None) => return Err(Error::validation("--n is required (flag or scenario)")),
    };
    let fraction = args
        .completion_fraction
        .or(resolved.scenario.synthesis_completion_fraction)
        .unwrap_or(0.9);

    let artifacts = runner::execute_run(&resolved.base_params(n_half))?;
    let report =
        analysis::synthesis_report(n_half, &resolved.rates, &artifacts.series, fraction)?;
    if let Some(path) = &args.out {
        io::write_json(path, &report)?;
    }
    println!("tau_1D formula           = {:.6e}", report.tau1d_formula);
    println!("tau_2D cascade estimate  = {:.6e}", report.tau2d_cascade_estimate);
    println!("cascade sum              = {:.6e}", report.cascade_sum);
    println!("mode-1 peak time         = {:.6e}", report.mode1_peak_time);
    println!("mode-2 peak time         = {:.6e}", report.mode2_peak_time);
    println!(
        "completion time ({:.0}%)    = {:.6e}",
        100.0 * report.completion_fraction,
        report.completion_time_90
    );
    println!("speedup vs cascade       = {:.3}", report.speedup);
    if let Some(path) = &args.out {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<()> {
    let report = oracle::run_verification(args.max_n, args.tolerance, args.inject_rate_bug)?;
    for case in &report.cases {
        println!(
            "{} {}: deviation {:.3e} (tolerance {:.1e})",
            if case.passed { "PASS" } else { "FAIL" },
            case.label,
            case.deviation,
            case.tolerance
        );
    }
    if let Some(path) = &args.out {
        io::write_json(path, &report)?;
        println!("wrote {}", path.display());
    }
    if report.passed {
        println!(
            "all {} cases passed; worst production deviation {:.3e}",
            report.cases.len(),
            report.worst_deviation
        );
        Ok(())
    } else {
        Err(Error::numerical(format!(
            "verification failed: worst production deviation {:.3e} (tolerance {:.1e})",
            report.worst_deviation, args.tolerance
        )))
    }
}
