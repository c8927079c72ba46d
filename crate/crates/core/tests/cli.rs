use std::path::Path;
use std::process::{Command, Output};

fn cbram(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbram")).args(args).env("CBRAM_OUT", out).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn sweep_writes_stamped_outputs_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = cbram(&["sweep", "--preset", "R", "--check"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("PASS set_onset"));
    let trace = std::fs::read_to_string(dir.path().join("sweep_trace.csv")).unwrap();
    assert!(trace.starts_with("# manifest=manifest.json experiment=sweep preset=R seed=1 "));
    assert!(dir.path().join("manifest.json").exists());

    let o = cbram(&["replay", dir.path().join("manifest.json").to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0);
    assert!(!String::from_utf8(o.stdout).unwrap().contains("DIFFER"));
}

#[test]
fn replay_flags_a_modified_manifest() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&cbram(&["kinetics", "--preset", "NPs"], dir.path())), 0);
    let path = dir.path().join("manifest.json");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut m: serde_json::Value = serde_json::from_str(&text).unwrap();
    m["outputs"]["kinetics.csv"] = serde_json::Value::String("0".repeat(64));
    std::fs::write(&path, m.to_string()).unwrap();
    assert_eq!(code(&cbram(&["replay", path.to_str().unwrap()], dir.path())), 3);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["cdf", "--devices", "0"][..],
        &["cdf", "--preset", "Q"],
        &["asca", "--levels", "20"],
        &["sweep", "--param", "nonexistent=1"],
        &["sweep", "--grid", "12by12"],
        &["sweep", "--bogus"],
        &["replay", "/nonexistent/manifest.json"],
    ] {
        assert_eq!(code(&cbram(args, dir.path())), 2, "{args:?}");
    }
}

#[test]
fn config_file_must_name_the_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cdf.toml");
    std::fs::write(&cfg, "experiment = \"cdf\"\nn_devices = 5\n").unwrap();
    assert_eq!(code(&cbram(&["asca", "--config", cfg.to_str().unwrap()], dir.path())), 2);
    let o = cbram(&["cdf", "--config", cfg.to_str().unwrap(), "--preset", "R"], dir.path());
    assert_eq!(code(&o), 0);
    let devices = std::fs::read_to_string(dir.path().join("cdf_devices.csv")).unwrap();
    assert!(devices.contains("preset=R"));
    assert_eq!(devices.lines().count(), 2 + 5);
}

#[test]
fn failed_checks_exit_with_three_only_under_check() {
    let dir = tempfile::tempdir().unwrap();
    // a drift barrier this high never sets within the sweep
    let args = ["sweep", "--param", "e_drift=1.6"];
    assert_eq!(code(&cbram(&args, dir.path())), 0);
    let mut strict = args.to_vec();
    strict.push("--check");
    assert_eq!(code(&cbram(&strict, dir.path())), 3);
}
