//! Binary surface checks: exit codes, error wording, and the artifact set
//! the pipeline leaves behind. Fixtures are generated through the library
//! to keep these fast; the binary is exercised through `std::process`.

use std::path::Path;
use std::process::{Command, Output};

use climpanel::synth::{self, SyntheticSpec};

fn climpanel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_climpanel")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Small but complete fixture: three provinces, eight years, one model.
fn small_fixture(dir: &Path) -> std::path::PathBuf {
    let spec = SyntheticSpec {
        n_provinces: 3,
        n_years: 8,
        n_models: 1,
        draws: 3,
        ..SyntheticSpec::default()
    };
    synth::generate(&spec, dir).expect("fixture generates").pipeline_cfg
}

#[test]
fn help_and_version_exit_zero() {
    let help = climpanel(&["--help"]);
    assert_eq!(code(&help), 0);
    assert!(stdout(&help).contains("aggregate"));
    let version = climpanel(&["--version"]);
    assert_eq!(code(&version), 0);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = climpanel(&["fit", "--nonsense"]);
    assert_eq!(code(&out), 4);
}

#[test]
fn validate_without_inputs_is_a_usage_error() {
    let out = climpanel(&["validate"]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("no inputs"));
}

#[test]
fn validate_accepts_a_clean_fixture() {
    let dir = tempfile::tempdir().unwrap();
    small_fixture(dir.path());
    let out = climpanel(&[
        "validate",
        "--grid",
        dir.path().join("grid").to_str().unwrap(),
        "--weights",
        dir.path().join("weights").to_str().unwrap(),
        "--panel",
        dir.path().join("panel.csv").to_str().unwrap(),
        "--growth",
        dir.path().join("growth.csv").to_str().unwrap(),
        "--shares",
        dir.path().join("shares.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).trim_end().ends_with("ok"));
}

#[test]
fn validate_reports_broken_weights_and_names_the_polygon() {
    let dir = tempfile::tempdir().unwrap();
    small_fixture(dir.path());
    // Push one polygon's coverage above a full share.
    let path = dir.path().join("weights/cell_weights.csv");
    let mut text = std::fs::read_to_string(&path).unwrap();
    let polygon = text.lines().nth(1).unwrap().split(',').next().unwrap().to_string();
    text.push_str(&format!("{polygon},tampered_cell,0.9\n"));
    std::fs::write(&path, text).unwrap();

    let out = climpanel(&["validate", "--weights", dir.path().join("weights").to_str().unwrap()]);
    assert_eq!(code(&out), 2, "stdout: {}", stdout(&out));
    assert!(stdout(&out).contains(&polygon), "violation should name {polygon}: {}", stdout(&out));
}

#[test]
fn pipeline_with_missing_climate_dir_fails_as_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_fixture(dir.path());
    std::fs::remove_dir_all(dir.path().join("climate")).unwrap();
    let out = climpanel(&["pipeline", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 4, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("climate"), "stderr: {}", stderr(&out));
}

#[test]
fn select_spec_with_empty_holdout_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    small_fixture(dir.path());
    let out = climpanel(&[
        "select-spec",
        "--panel",
        dir.path().join("panel.csv").to_str().unwrap(),
        "--candidates",
        dir.path().join("candidates.csv").to_str().unwrap(),
        "--split",
        "2050",
        "--out",
        dir.path().join("cv.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("2050"));
}

#[test]
fn pipeline_smoke_produces_the_expected_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_fixture(dir.path());
    let out = climpanel(&["pipeline", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let out_dir = dir.path().join("out");
    for artifact in ["panel.csv", "fit.json", "summary.csv", "summary_plot.csv", "manifest.json"] {
        assert!(out_dir.join(artifact).is_file(), "{artifact} missing");
    }
    // Three provinces over eight years cannot support the candidate grid,
    // so the fixture omits the selection stage entirely.
    assert!(!out_dir.join("cv.csv").exists());
    let runs: Vec<_> = std::fs::read_dir(out_dir.join("runs")).unwrap().collect();
    assert!(!runs.is_empty());

    // The fit is usable downstream: report at regional scope.
    let grp = climpanel(&[
        "report",
        "--runs",
        out_dir.join("runs").to_str().unwrap(),
        "--shares",
        dir.path().join("shares.csv").to_str().unwrap(),
        "--scope",
        "grp",
        "--out",
        out_dir.join("grp_summary.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&grp), 0, "stderr: {}", stderr(&grp));
    assert!(out_dir.join("grp_summary.csv").is_file());
    assert!(out_dir.join("grp_summary_plot.csv").is_file());
}

#[test]
fn report_rejects_an_unknown_scope() {
    let dir = tempfile::tempdir().unwrap();
    let out = climpanel(&[
        "report",
        "--runs",
        dir.path().to_str().unwrap(),
        "--shares",
        dir.path().join("shares.csv").to_str().unwrap(),
        "--scope",
        "galaxy",
        "--out",
        dir.path().join("s.csv").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 4);
}
