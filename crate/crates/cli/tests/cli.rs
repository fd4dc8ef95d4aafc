use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn tmag(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tmag"))
        .args(args)
        .output()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

#[test]
fn tune_writes_trajectory_and_summary() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = tmag(&["--out", out, "tune", "--set-point", "0.1", "--gap", "0.001"]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert_eq!(listing(dir.path()), ["summary.json", "trajectory.csv"]);

    let summary = json(&dir.path().join("summary.json"));
    assert!(summary["error_T"].as_f64().unwrap().abs() <= 1e-4);
    assert_eq!(summary["B_g_set_T"], 0.1);
    let traj = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(
        traj.lines().next().unwrap(),
        "t_s,U_c_V,I_c_A,H_m_A_per_m,B_m_T,B_g_T"
    );
    assert!(traj.lines().count() > 100);
}

#[test]
fn zero_set_point_tunes() {
    let dir = TempDir::new().unwrap();
    let run = tmag(&[
        "--out",
        dir.path().to_str().unwrap(),
        "tune",
        "--set-point",
        "0",
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let summary = json(&dir.path().join("summary.json"));
    assert!(summary["final_B_g_T"].as_f64().unwrap().abs() <= 1e-4);
}

#[test]
fn missing_dataset_leaves_only_error_report() {
    let dir = TempDir::new().unwrap();
    let mut config: Value =
        serde_json::from_str(include_str!("../../../configs/nominal.json")).unwrap();
    config["bh_dataset"] = "missing.csv".into();
    let path = dir.path().join("bad.json");
    fs::write(&path, config.to_string()).unwrap();
    let out = dir.path().join("out");

    let run = tmag(&[
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "tune",
        "--set-point",
        "0.1",
    ]);
    assert!(!run.status.success());
    assert_eq!(listing(&out), ["error.json"]);
    let report = json(&out.join("error.json"));
    assert_eq!(report["kind"], "config");
    assert!(report["message"].as_str().unwrap().contains("missing.csv"));
}

#[test]
fn unreachable_set_point_reports_kind() {
    let dir = TempDir::new().unwrap();
    let run = tmag(&[
        "--out",
        dir.path().to_str().unwrap(),
        "tune",
        "--set-point",
        "3",
    ]);
    assert!(!run.status.success());
    assert_eq!(listing(dir.path()), ["error.json"]);
    assert_eq!(json(&dir.path().join("error.json"))["kind"], "unreachable");
}

#[test]
fn campaign_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let args = |out: &str| {
        tmag(&[
            "--out",
            out,
            "--seed",
            "7",
            "campaign",
            "--set-points",
            "0.05,0.15",
            "--gaps",
            "0.001",
            "--n",
            "1",
        ])
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(args(a.to_str().unwrap()).status.success());
    assert!(args(b.to_str().unwrap()).status.success());
    let first = fs::read(a.join("campaign.csv")).unwrap();
    assert_eq!(first, fs::read(b.join("campaign.csv")).unwrap());

    let text = String::from_utf8(first).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "B_g_set_T,l_g_m,mean_T,MAE_T,precision_3sigma_T,n,errors"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "0.15");
    for row in &rows {
        assert_eq!(row[4], "0");
        assert_eq!(row[5], "1");
        assert!(row[3].parse::<f64>().unwrap() <= 1e-4);
    }
}

#[test]
fn sweep_then_characterize_recovers_fit() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(tmag(&["--out", out, "sweep"]).status.success());
    let log = dir.path().join("sweep_log.csv");
    let run = tmag(&["--out", out, "characterize", "--log", log.to_str().unwrap()]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );

    let report = json(&dir.path().join("fit_report.json"));
    let slope = report["slope"].as_f64().unwrap();
    let intercept = report["intercept"].as_f64().unwrap();
    assert!((slope / 0.955 - 1.0).abs() < 0.01, "{slope}");
    assert!((intercept / 4.69 - 1.0).abs() < 0.01, "{intercept}");
    assert!(dir.path().join("recoil_points.csv").exists());
    assert!(dir.path().join("major_branch.csv").exists());
}

#[test]
fn empty_log_is_rejected() {
    let dir = TempDir::new().unwrap();
    let log = dir.path().join("empty.csv");
    fs::write(&log, "").unwrap();
    let out = dir.path().join("out");
    let run = tmag(&[
        "--out",
        out.to_str().unwrap(),
        "characterize",
        "--log",
        log.to_str().unwrap(),
    ]);
    assert!(!run.status.success());
    assert_eq!(listing(&out), ["error.json"]);
    assert_eq!(json(&out.join("error.json"))["kind"], "invalid_log");
}
