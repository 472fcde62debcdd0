use std::path::Path;
use std::process::{Command, Output};

fn covfar(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covfar"))
        .arg("--output-dir")
        .arg(out)
        .args(args)
        .env_remove("COVFAR_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_normalize_fit_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();

    let o = covfar(out, &["simulate", "--seed", "3", "--probes", "1500"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = covfar(out, &["normalize"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("anchor dropped"));
    let o = covfar(out, &["fit"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = covfar(out, &["report"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    for f in [
        "scores.csv",
        "ground_truth.json",
        "normalized.csv",
        "normalization.json",
        "normalization_fit_system_a.csv",
        "roc_system_a.csv",
        "model.json",
        "drop_log.json",
        "coefficients.txt",
        "coefficients.csv",
        "coefficients.tex",
        "summary.txt",
        "summary.csv",
        "summary.tex",
        "forest.svg",
        "forest.csv",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let csv = std::fs::read_to_string(out.join("coefficients.csv")).unwrap();
    assert!(csv.starts_with("cov_name,level,coef,ci_low,ci_high,p_value,num_probes\n"));

    let o = covfar(
        out,
        &["predict", "--set", "Algorithm=System C", "--format", "json"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let s = v["s"].as_f64().unwrap();
    assert!((v["far"].as_f64().unwrap() - 10f64.powf(s)).abs() < 1e-15);
    assert_eq!(v["terms"].as_array().unwrap().len(), 2);
}

#[test]
fn fit_on_raw_scores_normalizes_on_the_fly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert!(covfar(out, &["simulate", "--probes", "800"])
        .status
        .success());
    let o = covfar(
        out,
        &["fit", "--input", out.join("scores.csv").to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("retained"));
}

#[test]
fn predict_with_published_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let o = covfar(
        dir.path(),
        &[
            "predict",
            "--paper-coefficients",
            "--set",
            "Head Hgt=<30 Pix",
            "--set",
            "Camera Loc=Long Range",
        ],
    );
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(text.contains("1 in 1,469"), "{text}");
    assert!(text.contains("true accept rate is 0.5"), "{text}");
}

#[test]
fn unknown_level_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = covfar(
        dir.path(),
        &[
            "predict",
            "--paper-coefficients",
            "--set",
            "Algorithm=System Z",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("System Z"), "{}", stderr(&o));
}

#[test]
fn refuses_to_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert!(covfar(out, &["simulate", "--probes", "300"])
        .status
        .success());
    let before = std::fs::read(out.join("scores.csv")).unwrap();
    let o = covfar(out, &["simulate", "--probes", "300", "--seed", "99"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--force"));
    assert_eq!(std::fs::read(out.join("scores.csv")).unwrap(), before);
    let o = covfar(
        out,
        &["simulate", "--probes", "300", "--seed", "99", "--force"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_ne!(std::fs::read(out.join("scores.csv")).unwrap(), before);
}

#[test]
fn report_from_published_table_matches_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = covfar(
        out,
        &["report", "--paper-coefficients", "--format", "latex"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let tex = std::fs::read_to_string(out.join("coefficients.tex")).unwrap();
    assert!(tex.contains("Group Var & - & 1.157"));
    let summary = std::fs::read_to_string(out.join("summary.tex")).unwrap();
    assert!(summary.contains("41119"));
}

#[test]
fn malformed_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "probe_id,raw_score\nP1,1\n").unwrap();
    let o = covfar(dir.path(), &["normalize", "--input", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing column"));
}
