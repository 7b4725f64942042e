use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
scenario = "perturbative"
[well]
v0 = 1.9
d = 2.443
[grid]
length = 20.0
points = 64
[evolution]
cutoff = 3.0
[schedule]
plateau = 41.9
ramp = 14.0
snapshot_interval = 13.96
branch_every = 1
[decay]
grid = { length = 80.0, points = 256 }
sample_every = 1
periods = 3
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_paircreate"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("PAIRCREATE_DT").output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn sha256_of(path: &Path) -> String {
    let out = Command::new("sha256sum").arg(path).output().unwrap();
    String::from_utf8(out.stdout).unwrap().split_whitespace().next().unwrap().to_string()
}

#[test]
fn missing_config_is_a_config_error() {
    assert_eq!(run(&["run"]).status.code(), Some(2));
    assert_eq!(run(&["spectrum", "--preset", "nonsense"]).status.code(), Some(2));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "scenario = \"perturbative\"\nbogus = 1\n[well]\nv0 = 1.9\nd = 2.4\n");
    let out = run(&["spectrum", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn bad_override_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    assert_eq!(run(&["run", "--config", &cfg, "--cutoff", "0"]).status.code(), Some(2));
    let out = bin().args(["run", "--config", &cfg]).env("PAIRCREATE_DT", "-1").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tune_reports_depth() {
    let out = run(&["tune", "--d", "3.2", "--length", "40", "--points", "128"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let v0: f64 = text.split("V0 = ").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!((v0 - 1.726).abs() < 0.02, "{text}");
}

#[test]
fn spectrum_writes_tables_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out_dir = dir.path().join("spec");
    let out = run(&["spectrum", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_source"].as_str().unwrap(), TINY);
    for f in manifest["files"].as_array().unwrap() {
        let name = f["name"].as_str().unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), sha256_of(&out_dir.join(name)), "{name}");
    }
    let text = fs::read_to_string(out_dir.join("spectrum.csv")).unwrap();
    assert!(text.lines().next().unwrap().starts_with("# run_id: "));
    assert!(text.contains("index,energy,class,width,p_in"));
}

#[test]
fn runs_are_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let out = run(&["run", "--config", &cfg, "--workers", "1", "--out", a.to_str().unwrap(), "--checkpoint"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["run", "--config", &cfg, "--workers", "3", "--out", b.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    for name in ["particle_number.csv", "in_field.csv", "momentum_spectrum.csv", "occupation.csv", "decay.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    assert!(a.join("states.bin").exists());
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["workers"], 3);
    assert!(manifest["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));

    let out = run(&["analyze", "--out", a.to_str().unwrap(), "--min-samples", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(a.join("analysis.json").exists());
}

#[test]
fn dt_override_reaches_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out_dir = dir.path().join("o");
    let out = bin()
        .args(["spectrum", "--config", &cfg, "--out", out_dir.to_str().unwrap()])
        .env("PAIRCREATE_DT", "0.025")
        .output()
        .unwrap();
    assert!(out.status.success());
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["schedule"]["dt"], 0.025);
}

#[test]
fn analyze_without_series_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["analyze", "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
}
