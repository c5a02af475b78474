use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn fsm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsm-placer"))
        .args(args)
        .current_dir(cwd)
        .env("FSM_PLACER_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn emit(name: &str, dir: &Path) -> String {
    let out = fsm(&["preset", "--emit", name], dir);
    assert!(out.status.success());
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn linear_decay_preset_run_writes_artifacts() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("cfg.json"),
        emit("linear-decay", tmp.path()),
    )
    .unwrap();
    let out = fsm(
        &[
            "run", "--config", "cfg.json", "--out", "out", "--seed", "3,4",
        ],
        tmp.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let dir = tmp.path().join("out");
    assert_eq!(
        json(&dir.join("placement.json"))["times"],
        serde_json::json!([0.1, 1.0])
    );
    for f in [
        "trajectory.csv",
        "sensitivities.csv",
        "summary.json",
        "seed_3/observations.json",
        "seed_3/estimate.json",
        "seed_4/estimate.json",
    ] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let summary = json(&dir.join("summary.json"));
    assert_eq!(summary["levels"][0]["runs"], 2);
    let header = fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    assert!(header.starts_with("t,x_0\n0,2\n"));
}

#[test]
fn burgers_without_noise_recovers_initial_condition() {
    let tmp = TempDir::new().unwrap();
    let out = fsm(
        &["run", "--preset", "burgers", "--noise", "0%", "--out", "b"],
        tmp.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = json(&tmp.path().join("b/summary.json"));
    let err = summary["levels"][0]["seeds"][0]["error"].as_f64().unwrap();
    assert!(err <= 1e-4, "IC error {err}");
    assert!(tmp.path().join("b/seed_0/estimate.json").is_file());
}

#[test]
fn equal_explicit_times_exit_two() {
    let tmp = TempDir::new().unwrap();
    let out = fsm(
        &["run", "--preset", "linear-decay", "--times", "0.5,0.5"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("singular"));
}

#[test]
fn invalid_configs_exit_two() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("bad.json"), r#"{"name": "x"}"#).unwrap();
    assert_eq!(
        fsm(&["validate", "--config", "bad.json"], tmp.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        fsm(&["preset", "--emit", "lorenz"], tmp.path())
            .status
            .code(),
        Some(2)
    );
    let out = fsm(
        &["run", "--preset", "linear-decay", "--times", "0.5,7"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let out = fsm(&["validate", "--preset", "advdiff"], tmp.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok: advdiff"));
}

#[test]
fn single_cell_sweep() {
    let tmp = TempDir::new().unwrap();
    let out = fsm(
        &[
            "sweep",
            "--preset",
            "linear-decay",
            "--t1",
            "0.1,0.1,1",
            "--t2",
            "1,1,1",
            "--out",
            "s",
        ],
        tmp.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(tmp.path().join("s/sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "t1,t2,y1sq,w1sq,y2sq,w2sq,detG,singular_flag");
    assert!(lines[1].starts_with("0.1,1,"));
    let summary = json(&tmp.path().join("s/sweep_summary.json"));
    assert_eq!(summary["t1_count"], 1);
    assert_eq!(
        fsm(&["sweep", "--preset", "advdiff"], tmp.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn sweep_reports_row_minimum() {
    let tmp = TempDir::new().unwrap();
    let out = fsm(
        &[
            "sweep",
            "--preset",
            "linear-decay",
            "--format",
            "json",
            "--out",
            "s",
        ],
        tmp.path(),
    );
    assert!(out.status.success());
    let summary = json(&tmp.path().join("s/sweep_summary.json"));
    let t2 = summary["fields"]["y2sq"]["row_argmin_t2"].as_f64().unwrap();
    assert!((t2 - 1.1).abs() < 0.021, "row argmin {t2}");
    let grid = json(&tmp.path().join("s/sweep.json"));
    assert_eq!(grid["t1_axis"].as_array().unwrap().len(), 100);
}

#[test]
fn identical_runs_give_identical_summaries() {
    let tmp = TempDir::new().unwrap();
    for dir in ["a", "b"] {
        let out = fsm(
            &[
                "run",
                "--preset",
                "quadratic-decay",
                "--seed",
                "7,8",
                "--noise",
                "5%,10%",
                "--out",
                dir,
            ],
            tmp.path(),
        );
        assert!(out.status.success());
    }
    let a = fs::read(tmp.path().join("a/summary.json")).unwrap();
    let b = fs::read(tmp.path().join("b/summary.json")).unwrap();
    assert_eq!(a, b);
    assert!(tmp
        .path()
        .join("a/noise_5pct/seed_7/estimate.json")
        .is_file());
}

#[test]
fn emitted_preset_round_trips() {
    let tmp = TempDir::new().unwrap();
    for name in ["linear-decay", "quadratic-decay", "burgers", "advdiff"] {
        let text = emit(name, tmp.path());
        fs::write(tmp.path().join("p.json"), &text).unwrap();
        assert!(fsm(&["validate", "--config", "p.json"], tmp.path())
            .status
            .success());
        let again = fsm(&["preset", "--emit", name], tmp.path());
        assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
    }
}

#[test]
fn json_tables_and_bad_thread_count() {
    let tmp = TempDir::new().unwrap();
    let out = fsm(
        &[
            "run",
            "--preset",
            "linear-decay",
            "--seed",
            "1",
            "--format",
            "json",
            "--out",
            "j",
        ],
        tmp.path(),
    );
    assert!(out.status.success());
    let table = json(&tmp.path().join("j/sensitivities.json"));
    assert_eq!(table["columns"], serde_json::json!(["t", "u", "v"]));
    let out = Command::new(env!("CARGO_BIN_EXE_fsm-placer"))
        .args(["validate", "--preset", "linear-decay"])
        .env("FSM_PLACER_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
