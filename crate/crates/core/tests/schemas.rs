//! Every emitted JSON artifact must validate against its published schema,
//! and the schemas must actually reject malformed documents.

use std::path::{Path, PathBuf};

use superradiance::analysis::{self, FitsArtifact};
use superradiance::dynamics::{DecayRates, InitialKind};
use superradiance::integrator::SolverConfig;
use superradiance::io;
use superradiance::oracle;
use superradiance::runner::{self, RunParams};

fn schema_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../schemas")
        .join(name)
}

fn validator(name: &str) -> jsonschema::Validator {
    let text = std::fs::read_to_string(schema_path(name))
        .unwrap_or_else(|e| panic!("cannot read schema {name}: {e}"));
    let schema: serde_json::Value = serde_json::from_str(&text).unwrap();
    jsonschema::validator_for(&schema).unwrap_or_else(|e| panic!("schema {name} invalid: {e}"))
}

fn assert_valid(validator: &jsonschema::Validator, value: &serde_json::Value) {
    if let Err(error) = validator.validate(value) {
        panic!("instance rejected: {error}");
    }
}

fn load(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn base_params(n_half: u32) -> RunParams {
    RunParams {
        n_half,
        rates: DecayRates::new(1.0, 0.5).unwrap(),
        init: InitialKind::VStandard,
        solver: SolverConfig { sample_count: 64, ..Default::default() },
        raw_intensity: false,
    }
}

#[test]
fn run_summary_artifacts_validate() {
    let v = validator("run_summary.schema.json");
    let dir = tempfile::tempdir().unwrap();

    let complete = runner::execute_run(&base_params(3)).unwrap();
    let (_, json_path) = runner::write_run_artifacts(dir.path(), &complete).unwrap();
    assert_valid(&v, &load(&json_path));

    // A run cut off by its horizon has record = null and must still
    // validate.
    let cut = runner::execute_run(&RunParams {
        solver: SolverConfig { t_max: Some(0.05), ..Default::default() },
        ..base_params(3)
    })
    .unwrap();
    assert!(!cut.summary.completed);
    let (_, json_path) = runner::write_run_artifacts(dir.path(), &cut).unwrap();
    assert_valid(&v, &load(&json_path));

    // A one-sided run exercises the null branches of the record itself.
    let silent = runner::execute_run(&RunParams {
        rates: DecayRates::new(1.0, 0.0).unwrap(),
        init: InitialKind::TwoLevelConventional,
        ..base_params(4)
    })
    .unwrap();
    let (_, json_path) = runner::write_run_artifacts(dir.path(), &silent).unwrap();
    assert_valid(&v, &load(&json_path));
}

#[test]
fn sweep_summary_artifact_validates() {
    let v = validator("sweep_summary.schema.json");
    let dir = tempfile::tempdir().unwrap();
    runner::execute_sweep(&base_params(0), &[2, 3, 4], dir.path()).unwrap();
    assert_valid(&v, &load(&dir.path().join("sweep_summary.json")));

    // With a failure marked: a fixed horizon the slow N=2 run cannot meet.
    let short = RunParams {
        solver: SolverConfig { t_max: Some(3.5), ..Default::default() },
        ..base_params(0)
    };
    let dir2 = tempfile::tempdir().unwrap();
    let outcome = runner::execute_sweep(&short, &[2, 12], dir2.path()).unwrap();
    assert!(!outcome.artifact.failed.is_empty());
    assert_valid(&v, &load(&dir2.path().join("sweep_summary.json")));
}

#[test]
fn fits_artifact_validates() {
    let v = validator("fits.schema.json");
    let dir = tempfile::tempdir().unwrap();
    let outcome =
        runner::execute_sweep(&base_params(0), &[2, 3, 4, 5, 6], dir.path()).unwrap();
    let sweep = analysis::SweepSummary::from_records(outcome.artifact.records);
    let fits = analysis::criteria_battery(&sweep).unwrap();
    let path = dir.path().join("fits.json");
    io::write_json(&path, &FitsArtifact { fits }).unwrap();
    assert_valid(&v, &load(&path));
}

#[test]
fn synthesis_report_validates() {
    let v = validator("synthesis_report.schema.json");
    let rates = DecayRates::new(1.0, 0.1).unwrap();
    let params = RunParams { rates: rates.clone(), ..base_params(10) };
    let artifacts = runner::execute_run(&params).unwrap();
    let report = analysis::synthesis_report(10, &rates, &artifacts.series, 0.9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("synthesis.json");
    io::write_json(&path, &report).unwrap();
    assert_valid(&v, &load(&path));
}

#[test]
fn verify_report_validates() {
    let v = validator("verify_report.schema.json");
    let report = oracle::run_verification(2, 1e-8, false).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("verify.json");
    io::write_json(&path, &report).unwrap();
    assert_valid(&v, &load(&path));
}

#[test]
fn scenario_schema_accepts_and_rejects_like_the_parser() {
    let v = validator("scenario.schema.json");
    let good: serde_json::Value = serde_json::json!({
        "gamma1": 1.0,
        "gamma2": 0.1,
        "n_values": {"min": 5, "max": 150, "step": 5},
        "init": "v-standard",
        "solver": {"rel_tol": 1e-8, "t_max": "auto", "sample_count": 2000},
        "output_dir": "runs",
        "raw_eq2_intensity": false,
        "synthesis_completion_fraction": 0.9
    });
    assert_valid(&v, &good);
    assert!(serde_json::from_value::<superradiance::cli::ScenarioFile>(good).is_ok());

    for bad in [
        serde_json::json!({"gamma1": 1.0, "gamme2": 0.1}),
        serde_json::json!({"solver": {"max_dt": 0.1}}),
        serde_json::json!({"n_values": {"min": 5, "max": 150}}),
        serde_json::json!({"init": "inverted"}),
        serde_json::json!({"solver": {"t_max": "forever"}}),
    ] {
        assert!(!v.is_valid(&bad), "schema accepted {bad}");
    }
}

#[test]
fn schemas_reject_mangled_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let artifacts = runner::execute_run(&base_params(3)).unwrap();
    let (_, json_path) = runner::write_run_artifacts(dir.path(), &artifacts).unwrap();
    let mut doc = load(&json_path);

    let v = validator("run_summary.schema.json");
    doc["surprise"] = serde_json::json!(1);
    assert!(!v.is_valid(&doc));
    let mut doc = load(&json_path);
    doc.as_object_mut().unwrap().remove("t_end");
    assert!(!v.is_valid(&doc));
    let mut doc = load(&json_path);
    doc["record"]["peak1"] = serde_json::json!("highest");
    assert!(!v.is_valid(&doc));
}
