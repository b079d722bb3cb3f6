//! End-to-end pipeline for one run and for N-sweeps: integrate, extract,
//! and persist artifacts with stable names.
//!
//! Sweeps fan out over a thread pool, but each run is independent and the
//! collected results are written in N order, so outputs are byte-identical
//! regardless of scheduling or worker count.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, SweepRecord};
use crate::dynamics::{
    build_generator, emission_weights, initial_distribution, DecayRates, InitialKind,
};
use crate::error::{Error, Result};
use crate::integrator::{auto_t_max, integrate, SolverConfig, TimeSeries};
use crate::io;
use crate::observables::{self, ObservableTrack};
use crate::statespace::StateSpace;

/// Everything needed to execute one run.
#[derive(Debug, Clone)]
pub struct RunParams {
    pub n_half: u32,
    pub rates: DecayRates,
    pub init: InitialKind,
    pub solver: SolverConfig,
    /// Report the bare cooperative emission sums instead of weighting them
    /// by the decay rates.
    pub raw_intensity: bool,
}

/// Serializable record of the solver settings a run actually used, with
/// the horizon resolved to a number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_max: f64,
    pub completion_epsilon: f64,
    pub sample_count: usize,
}

/// Per-run summary artifact. `record` holds the extracted quantities and
/// is absent when the run hit its horizon before settling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n_half: u32,
    pub gamma1: f64,
    pub gamma2: f64,
    pub init_kind: String,
    pub raw_intensity: bool,
    pub solver: SolverSettings,
    pub t_end: f64,
    pub completed: bool,
    /// Largest deviation of the total probability from 1 over the sampled
    /// series; a conservation diagnostic for the integration.
    pub mass_error: f64,
    pub record: Option<SweepRecord>,
}

/// In-memory products of one run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub series: TimeSeries,
    pub track: ObservableTrack,
    pub summary: RunSummary,
}

pub fn execute_run(params: &RunParams) -> Result<RunArtifacts> {
    let space = StateSpace::new(params.n_half)?;
    let gen = build_generator(&space, &params.rates);
    let weights = emission_weights(&space, &params.rates, params.raw_intensity);
    let init = initial_distribution(&space, &params.init)?;
    let series = integrate(&gen, &weights, &init, &params.solver)?;
    let track = observables::observable_track(&series);
    let record = if series.completed {
        Some(analysis::summarize_run(params.n_half, &params.rates, &params.init, &series)?)
    } else {
        None
    };
    let mass_error = series
        .total_mass
        .iter()
        .map(|m| (m - 1.0).abs())
        .fold(0.0, f64::max);
    let summary = RunSummary {
        n_half: params.n_half,
        gamma1: params.rates.gamma1(),
        gamma2: params.rates.gamma2(),
        init_kind: params.init.name().to_string(),
        raw_intensity: params.raw_intensity,
        solver: SolverSettings {
            rel_tol: params.solver.rel_tol,
            abs_tol: params.solver.abs_tol,
            t_max: params
                .solver
                .t_max
                .unwrap_or_else(|| auto_t_max(&params.rates, params.n_half)),
            completion_epsilon: params.solver.completion_epsilon,
            sample_count: params.solver.sample_count,
        },
        t_end: series.t_end,
        completed: series.completed,
        mass_error,
        record,
    };
    Ok(RunArtifacts { series, track, summary })
}

/// Stable file stem for one run's artifacts.
pub fn run_file_stem(n_half: u32) -> String {
    format!("run_n{n_half:04}")
}

/// Writes the run's CSV and summary JSON into `dir`; returns both paths.
pub fn write_run_artifacts(dir: &Path, artifacts: &RunArtifacts) -> Result<(PathBuf, PathBuf)> {
    let stem = run_file_stem(artifacts.summary.n_half);
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    io::write_run_csv(&csv_path, &artifacts.series, &artifacts.track)?;
    io::write_json(&json_path, &artifacts.summary)?;
    Ok((csv_path, json_path))
}

/// An N value the sweep could not process, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRun {
    pub n_half: u32,
    pub error: String,
}

/// Consolidated sweep artifact: shared parameters, one record per finished
/// N, and the N values that failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepArtifact {
    pub gamma1: f64,
    pub gamma2: f64,
    pub init_kind: String,
    pub raw_intensity: bool,
    pub solver_request: SolverRequest,
    pub records: Vec<SweepRecord>,
    pub failed: Vec<FailedRun>,
}

/// Solver settings as requested, before per-run horizon resolution; `t_max`
/// stays symbolic because the automatic horizon depends on N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRequest {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_max: TMaxRequest,
    pub completion_epsilon: f64,
    pub sample_count: usize,
}

/// Horizon request: a fixed number or automatic per-run estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TMaxRequest {
    Value(f64),
    Keyword(String),
}

impl TMaxRequest {
    pub fn auto() -> Self {
        TMaxRequest::Keyword("auto".to_string())
    }

    /// The explicit horizon, if one was requested.
    pub fn resolve(&self) -> Result<Option<f64>> {
        match self {
            TMaxRequest::Value(v) => Ok(Some(*v)),
            TMaxRequest::Keyword(k) if k == "auto" => Ok(None),
            TMaxRequest::Keyword(k) => Err(Error::validation(format!(
                "t_max must be a number or \"auto\", got \"{k}\""
            ))),
        }
    }
}

impl SolverRequest {
    pub fn from_config(config: &SolverConfig) -> Self {
        SolverRequest {
            rel_tol: config.rel_tol,
            abs_tol: config.abs_tol,
            t_max: config.t_max.map_or_else(TMaxRequest::auto, TMaxRequest::Value),
            completion_epsilon: config.completion_epsilon,
            sample_count: config.sample_count,
        }
    }
}

/// Sweep products: the consolidated artifact plus every finished run, in N
/// order, for downstream consumers that need the full tracks.
#[derive(Debug)]
pub struct SweepOutcome {
    pub artifact: SweepArtifact,
    pub runs: Vec<RunArtifacts>,
}

/// Executes one run per N value in parallel and writes all artifacts under
/// `dir`. A failing N is recorded and does not stop the others; the caller
/// decides what a non-empty `failed` list means for the process exit.
pub fn execute_sweep(base: &RunParams, n_values: &[u32], dir: &Path) -> Result<SweepOutcome> {
    if n_values.is_empty() {
        return Err(Error::validation("sweep has no N values"));
    }
    let mut sorted: Vec<u32> = n_values.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if base.solver.completion_epsilon <= 0.0 {
        return Err(Error::validation(
            "sweeps need a completion threshold; completion_epsilon must be positive",
        ));
    }

    let results: Vec<(u32, Result<RunArtifacts>)> = sorted
        .par_iter()
        .map(|&n_half| {
            let params = RunParams { n_half, ..base.clone() };
            let result = execute_run(&params).and_then(|artifacts| {
                if artifacts.summary.completed {
                    Ok(artifacts)
                } else {
                    Err(Error::numerical(format!(
                        "run reached t_max = {:.6e} without settling",
                        artifacts.summary.solver.t_max
                    )))
                }
            });
            (n_half, result)
        })
        .collect();

    let mut records = Vec::new();
    let mut failed = Vec::new();
    let mut runs = Vec::new();
    for (n_half, result) in results {
        match result {
            Ok(artifacts) => {
                write_run_artifacts(dir, &artifacts)?;
                records.push(artifacts.summary.record.clone().expect("completed run has a record"));
                runs.push(artifacts);
            }
            Err(err) => failed.push(FailedRun { n_half, error: err.to_string() }),
        }
    }

    let artifact = SweepArtifact {
        gamma1: base.rates.gamma1(),
        gamma2: base.rates.gamma2(),
        init_kind: base.init.name().to_string(),
        raw_intensity: base.raw_intensity,
        solver_request: SolverRequest::from_config(&base.solver),
        records,
        failed,
    };
    io::write_json(&dir.join("sweep_summary.json"), &artifact)?;
    io::write_sweep_csv(&dir.join("sweep_summary.csv"), &artifact.records)?;
    Ok(SweepOutcome { artifact, runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn base_params() -> RunParams {
        RunParams {
            n_half: 4,
            rates: DecayRates::new(1.0, 0.5).unwrap(),
            init: InitialKind::VStandard,
            solver: SolverConfig { sample_count: 200, ..Default::default() },
            raw_intensity: false,
        }
    }

    #[test]
    fn single_run_produces_consistent_artifacts() {
        let artifacts = execute_run(&base_params()).unwrap();
        assert!(artifacts.summary.completed);
        let record = artifacts.summary.record.as_ref().unwrap();
        assert_eq!(record.n_half, 4);
        assert_abs_diff_eq!(record.area1_inf, 4.0, epsilon = 1e-3);
        assert_abs_diff_eq!(record.area2_inf, 4.0, epsilon = 1e-3);
        assert!(artifacts.summary.mass_error < 1e-9);
        assert_eq!(artifacts.track.times.len(), 200);
    }

    #[test]
    fn incomplete_run_has_no_record() {
        let params = RunParams {
            solver: SolverConfig { t_max: Some(0.01), ..Default::default() },
            ..base_params()
        };
        let artifacts = execute_run(&params).unwrap();
        assert!(!artifacts.summary.completed);
        assert!(artifacts.summary.record.is_none());
    }

    #[test]
    fn raw_intensity_rescales_areas_but_not_delays() {
        let weighted = execute_run(&base_params()).unwrap();
        let raw = execute_run(&RunParams { raw_intensity: true, ..base_params() }).unwrap();
        let (wr, rr) = (
            weighted.summary.record.as_ref().unwrap(),
            raw.summary.record.as_ref().unwrap(),
        );
        // gamma2 = 0.5: the bare mode-2 area doubles, delays are ratios and
        // stay put.
        assert_abs_diff_eq!(rr.area2_inf, 2.0 * wr.area2_inf, epsilon = 1e-6);
        assert_abs_diff_eq!(rr.area1_inf, wr.area1_inf, epsilon = 1e-9);
        assert_abs_diff_eq!(
            rr.tau2_inf.unwrap(),
            wr.tau2_inf.unwrap(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn sweep_writes_ordered_artifacts_and_summaries() {
        let dir = tempfile::tempdir().unwrap();
        let outcome = execute_sweep(&base_params(), &[5, 3, 4, 3], dir.path()).unwrap();
        assert!(outcome.artifact.failed.is_empty());
        let ns: Vec<u32> = outcome.artifact.records.iter().map(|r| r.n_half).collect();
        assert_eq!(ns, vec![3, 4, 5]);
        for n in [3u32, 4, 5] {
            assert!(dir.path().join(format!("run_n{n:04}.csv")).exists());
            assert!(dir.path().join(format!("run_n{n:04}.json")).exists());
        }
        let loaded: SweepArtifact =
            io::read_json(&dir.path().join("sweep_summary.json")).unwrap();
        assert_eq!(loaded, outcome.artifact);
        assert!(dir.path().join("sweep_summary.csv").exists());
    }

    #[test]
    fn sweep_marks_failed_n_and_continues() {
        let dir = tempfile::tempdir().unwrap();
        // Every rate in the system grows with N, so a fixed horizon that is
        // ample for N=12 still cuts the N=2 run off before it settles.
        let base = RunParams {
            solver: SolverConfig { t_max: Some(3.5), ..Default::default() },
            ..base_params()
        };
        let outcome = execute_sweep(&base, &[2, 12], dir.path()).unwrap();
        assert_eq!(outcome.artifact.records.len(), 1);
        assert_eq!(outcome.artifact.records[0].n_half, 12);
        assert_eq!(outcome.artifact.failed.len(), 1);
        assert_eq!(outcome.artifact.failed[0].n_half, 2);
        assert!(!dir.path().join("run_n0002.csv").exists());
        assert!(dir.path().join("run_n0012.csv").exists());
    }

    #[test]
    fn sweep_rejects_disabled_completion_and_empty_ranges() {
        let dir = tempfile::tempdir().unwrap();
        let no_completion = RunParams {
            solver: SolverConfig { completion_epsilon: 0.0, ..Default::default() },
            ..base_params()
        };
        assert!(execute_sweep(&no_completion, &[2, 3], dir.path()).is_err());
        assert!(execute_sweep(&base_params(), &[], dir.path()).is_err());
    }

    #[test]
    fn t_max_request_forms() {
        assert_eq!(TMaxRequest::auto().resolve().unwrap(), None);
        assert_eq!(TMaxRequest::Value(2.5).resolve().unwrap(), Some(2.5));
        assert!(TMaxRequest::Keyword("soon".into()).resolve().is_err());
        let parsed: TMaxRequest = serde_json::from_str("\"auto\"").unwrap();
        assert_eq!(parsed, TMaxRequest::auto());
        let parsed: TMaxRequest = serde_json::from_str("3.5").unwrap();
        assert_eq!(parsed, TMaxRequest::Value(3.5));
    }
}
