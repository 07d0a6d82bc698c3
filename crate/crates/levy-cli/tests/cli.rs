//! End-to-end runs of the `levy` binary against the bundled model files.
//!
//! Each test drives the real executable, points `--out` at a scratch
//! directory under the cargo target tree, and inspects the exit code and the
//! JSON/CSV artifacts it leaves behind.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn model(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../models")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

/// Fresh scratch directory; stale artifacts would defeat the byte comparisons.
fn scratch(tag: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(tag);
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn levy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levy"))
        .args(args)
        .output()
        .expect("the levy binary should launch")
}

fn json(dir: &Path, file: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join(file))
        .unwrap_or_else(|e| panic!("reading {file}: {e}"));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("parsing {file}: {e}"))
}

fn stderr_of(run: &Output) -> String {
    String::from_utf8_lossy(&run.stderr).into_owned()
}

#[test]
fn solve_reports_the_known_diffusion_policy() {
    let dir = scratch("solve_merton");
    let run = levy(&["solve", &model("merton_diffusion.toml"), "--out", dir.to_str().unwrap()]);
    assert!(run.status.success(), "stderr: {}", stderr_of(&run));

    let rep = json(&dir, "solve.json");
    assert!((rep["pi_hat"][0].as_f64().unwrap() - 4.0).abs() < 1e-8);
    assert!((rep["g_star"].as_f64().unwrap() - 0.16).abs() < 1e-10);
    assert!((rep["rate_a"].as_f64().unwrap() - 0.16).abs() < 1e-10);
    assert_eq!(rep["maximizer_attained"], true);

    // the manifest must pin down what produced the artifact
    let man = json(&dir, "manifest.json");
    assert_eq!(man["command"], "solve");
    assert_eq!(man["model_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn free_lunch_model_exits_with_the_finding_code() {
    let dir = scratch("nuip_free_lunch");
    let run = levy(&[
        "nuip",
        &model("increasing_jump_asset.toml"),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(2), "stderr: {}", stderr_of(&run));

    let rep = json(&dir, "nuip.json");
    assert_eq!(rep["verdict"], "violated");
    // only-upward jumps with a free long position: the witness is the asset itself
    assert_eq!(rep["witness"][0].as_f64().unwrap(), 1.0);
}

#[test]
fn verify_signs_off_on_the_consumption_model() {
    let dir = scratch("verify_consumption");
    let run = levy(&[
        "verify",
        &model("compound_poisson.toml"),
        "--paths",
        "2000",
        "--seed",
        "7",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "stderr: {}", stderr_of(&run));

    let rep = json(&dir, "verify.json");
    assert_eq!(rep["ok"], true);
    let checks = rep["checks"].as_array().unwrap();
    assert!(!checks.is_empty());
    assert!(checks.iter().all(|row| row["status"] != "fail"));
}

#[test]
fn rerunning_with_the_same_seed_is_byte_identical() {
    let args = |dir: &Path| {
        vec![
            "simulate".to_string(),
            model("merton_diffusion.toml"),
            "--paths".into(),
            "500".into(),
            "--seed".into(),
            "99".into(),
            "--out".into(),
            dir.to_string_lossy().into_owned(),
        ]
    };
    let a = scratch("rerun_a");
    let b = scratch("rerun_b");
    assert!(levy(&args(&a).iter().map(String::as_str).collect::<Vec<_>>()).status.success());
    assert!(levy(&args(&b).iter().map(String::as_str).collect::<Vec<_>>()).status.success());

    for file in ["simulate.json", "manifest.json"] {
        let left = std::fs::read(a.join(file)).unwrap();
        let right = std::fs::read(b.join(file)).unwrap();
        assert_eq!(left, right, "{file} differs between identical runs");
    }
}

#[test]
fn g_scan_writes_one_row_per_grid_point() {
    let dir = scratch("gscan_grid");
    let run = levy(&[
        "g-scan",
        &model("merton_diffusion.toml"),
        "--lo",
        "-1",
        "--hi",
        "5",
        "--steps",
        "30",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "stderr: {}", stderr_of(&run));

    let csv = std::fs::read_to_string(dir.join("g_scan.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("y,g"));
    assert_eq!(lines.count(), 31, "steps = 30 means 31 grid points");
}

#[test]
fn unparseable_model_is_an_operational_error_with_position() {
    let dir = scratch("validate_garbage");
    let bad = dir.join("garbage.toml");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(&bad, "(triplet]\nb = [0.08\n").unwrap();

    let run = levy(&["validate", bad.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(1));
    assert!(
        stderr_of(&run).contains("line 1"),
        "parse errors should carry a position: {}",
        stderr_of(&run)
    );
}

#[test]
fn out_of_range_exponent_is_a_negative_finding() {
    let dir = scratch("validate_bad_p");
    let bad = dir.join("bad_p.toml");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(
        &bad,
        "[triplet]\nb = [0.08]\nc = [[0.04]]\n\n[problem]\np = 1.5\ndelta = 0\nT = 1.0\nx0 = 1.0\n",
    )
    .unwrap();

    let run = levy(&["validate", bad.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
    let rep = json(&dir, "validate.json");
    assert_eq!(rep["valid"], false);
    assert!(!rep["violations"].as_array().unwrap().is_empty());
}

#[test]
fn transform_writes_a_model_that_resolves_identically() {
    let dir = scratch("transform_roundtrip");
    let run = levy(&[
        "transform",
        &model("negative_jump_constrained.toml"),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "stderr: {}", stderr_of(&run));

    let rep = json(&dir, "transform.json");
    // the crash-prone asset is replaced by a half-sized position
    assert!((rep["lambda"][0][0].as_f64().unwrap() - 0.5).abs() < 1e-12);
    let file = rep["transformed_model_file"].as_str().unwrap();

    // the emitted file is a complete model: solving it reproduces the value
    let orig_dir = scratch("transform_roundtrip_orig");
    let orig = levy(&[
        "solve",
        &model("negative_jump_constrained.toml"),
        "--out",
        orig_dir.to_str().unwrap(),
    ]);
    assert!(orig.status.success());
    let new_dir = scratch("transform_roundtrip_new");
    let new = levy(&[
        "solve",
        dir.join(file).to_str().unwrap(),
        "--out",
        new_dir.to_str().unwrap(),
    ]);
    assert!(new.status.success(), "stderr: {}", stderr_of(&new));

    let g_orig = json(&orig_dir, "solve.json")["g_star"].as_f64().unwrap();
    let g_new = json(&new_dir, "solve.json")["g_star"].as_f64().unwrap();
    assert!((g_orig - g_new).abs() < 1e-12, "{g_orig} vs {g_new}");
}

#[test]
fn dual_measure_artifacts_for_the_diffusion() {
    let dir = scratch("qmeasure_merton");
    let run = levy(&["qmeasure", &model("merton_diffusion.toml"), "--out", dir.to_str().unwrap()]);
    assert!(run.status.success(), "stderr: {}", stderr_of(&run));

    let rep = json(&dir, "qmeasure.json");
    assert_eq!(rep["exists"], true);
    assert!((rep["girsanov_continuous"][0].as_f64().unwrap() + 2.0).abs() < 1e-10);
    let file = rep["model_under_q_file"].as_str().unwrap();

    // the drifted model must itself be a valid model file
    let check_dir = scratch("qmeasure_merton_check");
    let check = levy(&["validate", dir.join(file).to_str().unwrap(), "--out", check_dir.to_str().unwrap()]);
    assert!(check.status.success(), "stderr: {}", stderr_of(&check));
}

#[test]
fn curves_end_at_the_terminal_values() {
    let dir = scratch("curves_terminal");
    let run = levy(&[
        "curves",
        &model("compound_poisson.toml"),
        "--samples",
        "11",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "stderr: {}", stderr_of(&run));

    let csv = std::fs::read_to_string(dir.join("curves.csv")).unwrap();
    assert!(csv.starts_with("t,ell,kappa\n"));
    // ell(T) = 1 and kappa(T) = 1 regardless of the model
    assert_eq!(csv.lines().last(), Some("1,1,1"));
}
