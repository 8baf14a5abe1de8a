use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mqs_core::config::{Mode, RunConfig};

fn mqs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mqs")).args(args).output().unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn shipped_configs_validate() {
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let out = mqs(&["validate", path.to_str().unwrap()]);
        assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn coherent_run_reports_mean() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = mqs(&[
        "--config",
        configs().join("coherent.json").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let line = String::from_utf8(out.stdout).unwrap();
    assert!(line.contains("mean=30.000000"), "{line}");
    let csv = fs::read_to_string(out_dir.join("n0_distribution.csv")).unwrap();
    assert!(csv.contains("# seed: 1\n") && csv.contains("# config: {\"mode\":\"coherent\""));
    assert!(out_dir.join("phase_distribution.csv").exists());
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        "t.json",
        r#"{"mode":"trajectories","n1":400,"n2":400,"nu":20,"ensemble_size":40,"seed":9}"#,
    );
    let run = || {
        let out = mqs(&["--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        (out.stdout, read_tree(&out_dir))
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
    assert_eq!(a.1.len(), 2);

    let other = mqs(&["--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--seed", "10"]);
    assert!(other.status.success());
    assert_ne!(read_tree(&out_dir), a.1);
}

#[test]
fn trajectory_file_leads_with_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = mqs(&["--mode", "trajectories", "--desk-scale", "--seed", "4", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(out_dir.join("trajectories.jsonl")).unwrap();
    let mut lines = text.lines();
    let meta: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
    assert_eq!(meta["seed"], 4);
    let cfg: RunConfig = serde_json::from_value(meta["config"].clone()).unwrap();
    assert_eq!((cfg.n1, cfg.mode), (100, Mode::Trajectories));
    assert_eq!(lines.count(), 200);
}

#[test]
fn depletion_is_reported_by_validate() {
    let dir = tempfile::tempdir().unwrap();
    let nu = write_config(dir.path(), "nu.json", r#"{"mode":"trajectories","n1":100,"n2":100,"nu":50}"#);
    let out = mqs(&["validate", nu.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("UndepletedAssumptionViolated"));

    let n0 = write_config(dir.path(), "n0.json", r#"{"mode":"coherent","n1":1000,"n2":1000,"sin2_vt":0.2}"#);
    let out = mqs(&["validate", n0.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("UndepletedAssumptionViolated"));

    let both = write_config(
        dir.path(),
        "both.json",
        r#"{"mode":"interference","n1":100,"n2":100,"nu":50,"sigma":-1}"#,
    );
    let out = mqs(&["validate", both.to_str().unwrap()]);
    assert_eq!(String::from_utf8_lossy(&out.stderr).lines().count(), 2);
}

#[test]
fn errors_carry_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = mqs(&["--config", dir.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error[config/ConfigError]"));

    let typo = write_config(dir.path(), "typo.json", r#"{"mode":"coherent","sin2vt":0.03}"#);
    assert_eq!(mqs(&["--config", typo.to_str().unwrap()]).status.code(), Some(2));

    assert_eq!(mqs(&[]).status.code(), Some(2));
    assert_ne!(mqs(&["--mode", "nonsense"]).status.code(), Some(0));
}

#[test]
fn oracle_check_passes_on_small_system() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = mqs(&[
        "--config",
        configs().join("oracle-check.json").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("oracle_check.json")).unwrap()).unwrap();
    assert_eq!(report["data"]["passed"], true);
}

#[test]
fn json_format_wraps_config() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write_config(dir.path(), "c.json", r#"{"mode":"collapse-demo","f0":0.5,"format":"json"}"#);
    let out = mqs(&["--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("collapse.json")).unwrap()).unwrap();
    assert_eq!(v["config"]["f0"], 0.5);
    assert_eq!(v["data"]["x"].as_array().unwrap().len(), 4001);
}
