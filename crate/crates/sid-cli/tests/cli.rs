//! End-to-end tests of the sid binary: exit codes, stdout contracts, and
//! artifact determinism.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_sid");

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const LV3_CONFIG: &str = "system = \"lv3\"\ndegree = 3\np = 100\nseed = 1\n";

#[test]
fn list_systems_names_registered_systems() {
    let out = run(&["list-systems"]);
    assert!(out.status.success());
    let text = stdout_of(&out);
    for needle in ["lv3, d=3", "fluid2d, d=12", "fluid3d, d=24", "ozone11, d=11", "ozone12, d=12"]
    {
        assert!(text.contains(needle), "missing {needle:?} in {text}");
    }
}

#[test]
fn discover_lv3_reports_counts_and_formulas() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), LV3_CONFIG);
    let out_dir = dir.path().join("run");
    let out = run(&[
        "discover",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout_of(&out);
    assert!(text.contains("M=4, c=2"), "stdout: {text}");
    assert!(text.contains("xyz"), "stdout: {text}");
    assert!(text.contains("x + y + z"), "stdout: {text}");
    for name in [
        "report.json",
        "formulas.txt",
        "run_meta.json",
        "spectrum_g.csv",
        "spectrum_a.csv",
        "theta_stage1.csv",
        "theta_stage2.csv",
        "theta_stage3.csv",
    ] {
        assert!(out_dir.join(name).exists(), "missing artifact {name}");
    }
}

#[test]
fn discover_is_byte_deterministic() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), LV3_CONFIG);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out_dir in [&out_a, &out_b] {
        let out = run(&[
            "discover",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    let a = std::fs::read(out_a.join("report.json")).unwrap();
    let b = std::fs::read(out_b.join("report.json")).unwrap();
    assert_eq!(a, b, "report.json differs between identical runs");
}

#[test]
fn discover_is_deterministic_under_thread_cap() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), LV3_CONFIG);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for (out_dir, threads) in [(&out_a, "1"), (&out_b, "4")] {
        let out = Command::new(BIN)
            .env("SID_THREADS", threads)
            .args([
                "discover",
                "--config",
                config.to_str().unwrap(),
                "--out",
                out_dir.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let a = std::fs::read(out_a.join("report.json")).unwrap();
    let b = std::fs::read(out_b.join("report.json")).unwrap();
    assert_eq!(a, b, "report.json depends on SID_THREADS");
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "system = \"lv3\"\ndegree = 3\nbogus = 1\n");
    let out = run(&["discover", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(err.contains("bogus"), "stderr: {err}");
}

#[test]
fn unknown_system_exits_2() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "system = \"nosuch\"\ndegree = 2\n");
    let out = run(&["discover", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn large_basis_requires_allow_large() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "system = \"fluid3d\"\ndegree = 4\n");
    let out = run(&["discover", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(err.contains("--allow-large"), "stderr: {err}");
}

#[test]
fn validate_passes_clean_report_and_rejects_corrupted() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), LV3_CONFIG);
    let out_dir = dir.path().join("run");
    let out = run(&[
        "discover",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    let report_path = out_dir.join("report.json");
    let out = run(&[
        "validate",
        "--config",
        config.to_str().unwrap(),
        "--report",
        report_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("validation.json").exists());
    assert!(out_dir.join("validation_cases.csv").exists());
    let cases = std::fs::read_to_string(out_dir.join("validation_cases.csv")).unwrap();
    assert!(cases.lines().next().unwrap().starts_with("case,Q1"));

    let mut report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    report["theta3"][0][0] = serde_json::json!(
        report["theta3"][0][0].as_f64().unwrap() + 0.25
    );
    let corrupt_path = dir.path().join("corrupt.json");
    std::fs::write(&corrupt_path, serde_json::to_string(&report).unwrap()).unwrap();
    let corrupt_out = dir.path().join("corrupt_stats");
    let out = run(&[
        "validate",
        "--config",
        config.to_str().unwrap(),
        "--report",
        corrupt_path.to_str().unwrap(),
        "--out",
        corrupt_out.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));
    let text = stdout_of(&out);
    assert!(text.contains("FAIL"), "stdout: {text}");
    assert!(corrupt_out.join("validation.json").exists(), "stats must still be written");
}

#[test]
fn sweep_lv3_tabulates_counts_and_survives_bad_degree_spec() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), LV3_CONFIG);
    let out = run(&["sweep", "--config", config.to_str().unwrap(), "--degrees", "1..3"]);
    assert!(out.status.success());
    let text = stdout_of(&out);
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() == 4 {
            rows.push((
                cols[0].parse::<u32>().unwrap(),
                cols[1].parse::<usize>().unwrap(),
                cols[2].parse::<usize>().unwrap(),
                cols[3].parse::<usize>().unwrap(),
            ));
        }
    }
    assert_eq!(rows, vec![(1, 3, 1, 1), (2, 9, 2, 1), (3, 19, 4, 2)]);

    let out = run(&["sweep", "--config", config.to_str().unwrap(), "--degrees", "3..1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["sweep", "--config", config.to_str().unwrap(), "--degrees", "2,2"]);
    assert_eq!(out.status.code(), Some(2));
}
