use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cvar-games"))
}

const QUADRATIC: &str = r#"{
  "scenario": {"name": "quadratic", "centers": [[0.3], [0.6]], "coupling": 0.1},
  "episodes": 30,
  "schedule": {"a": 0.5, "b": 0.5},
  "variants": [
    {"kind": "momentum", "beta": 0.5, "eta": 0.01, "delta": 0.05},
    {"kind": "residual_feedback", "eta": 0.01, "delta": 0.05}
  ],
  "alpha": [0.5],
  "trials": 2,
  "seed": 5
}"#;

fn write(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p
}

fn exec(args: &[&str], config: &Path, out: &Path) -> Output {
    bin().args(args).arg("--config").arg(config).arg("--out").arg(out).output().unwrap()
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), QUADRATIC);
    let out = dir.path().join("out");
    let o = exec(&["run"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("config hash"));
    for f in ["trace.csv", "aggregate.csv", "summary.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn every_subcommand_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), QUADRATIC);
    for (args, file) in [
        (vec!["compare", "--quiet"], "comparison.csv"),
        (vec!["sweep-beta", "--quiet", "--betas", "0.1,0.9"], "sweep.csv"),
        (vec!["emit-schedule", "--quiet"], "schedule.csv"),
    ] {
        let out = dir.path().join(args[0]);
        let o = exec(&args, &cfg, &out);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(o.stdout.is_empty());
        assert!(out.join(file).exists());
    }
    let o = bin().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("ok:"));
}

#[test]
fn seed_and_trial_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), QUADRATIC);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(exec(&["run", "--quiet", "--seed", "1", "--trials", "1"], &cfg, &a).status.success());
    assert!(exec(&["run", "--quiet", "--seed", "2", "--trials", "1"], &cfg, &b).status.success());
    let ta = fs::read_to_string(a.join("trace.csv")).unwrap();
    let tb = fs::read_to_string(b.join("trace.csv")).unwrap();
    assert_ne!(ta, tb);
    assert_eq!(ta.lines().count(), 1 + 2 * 30 * 2);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seeds"]["master"], 1);
}

#[test]
fn validation_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = QUADRATIC
        .replace("\"trials\": 2", "\"trials\": 0")
        .replace("\"alpha\": [0.5]", "\"alpha\": [1.5]");
    let cfg = write(dir.path(), &bad);
    let o = bin().args(["validate", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("trials") && err.contains("alpha"), "{err}");

    let unknown = QUADRATIC.replace("\"seed\": 5", "\"seed\": 5, \"sede\": 5");
    let cfg = write(dir.path(), &unknown);
    let out = dir.path().join("out");
    let o = exec(&["run"], &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.join("manifest.json").exists());

    let cfg = write(dir.path(), QUADRATIC);
    let o = exec(&["sweep-beta", "--betas", "0.5,1.0"], &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    let one = QUADRATIC.replace(
        ",\n    {\"kind\": \"residual_feedback\", \"eta\": 0.01, \"delta\": 0.05}",
        "",
    );
    let cfg = write(dir.path(), &one);
    let o = exec(&["compare"], &cfg, &out);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = exec(&["run"], &dir.path().join("absent.json"), dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn shipped_configs_validate() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&configs).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let o = bin().args(["validate", "--quiet", "--config"]).arg(&path).output().unwrap();
            assert!(o.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&o.stderr));
            seen += 1;
        }
    }
    assert!(seen >= 1);
}
