use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("wavegap-cli-{}-{tag}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavegap")).args(args).arg("--out").arg(out).output().unwrap()
}

const SMALL: &str = r#"
name = "small"
[model]
kernel = { family = "exponential", scale = 1.0 }
nonlinearity = { kind = "neural_field", steepness = 8.0, threshold = 0.5 }
[grid]
half_width = 20.0
nodes = 384
[gap]
n_samples = 50
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn certified_run_exits_zero_and_writes_reports() {
    let dir = scratch("ok");
    let cfg = write_config(&dir, "small.toml", SMALL);
    let out = dir.join("out");
    let o = run(&["gap", "certify", "--config", &cfg, "--seed", "4"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("gap.json")).unwrap()).unwrap();
    assert_eq!(v["seed"], 4);
    assert_eq!(v["status"], 0);
    assert_eq!(v["result"]["certified"], true);
    let o = run(&["wave", "solve", "--config", &cfg], &out);
    assert_eq!(o.status.code(), Some(0));
    assert!(out.join("wave.csv").exists() && out.join("wave.json").exists());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn missing_kernel_scale_is_a_config_error_naming_the_field() {
    let dir = scratch("missing");
    let cfg = write_config(&dir, "bad.toml", &SMALL.replace(", scale = 1.0", ""));
    let o = run(&["wave", "solve", "--config", &cfg], &dir.join("out"));
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("scale"), "{err}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn unknown_keys_and_bad_values_are_rejected() {
    let dir = scratch("bad");
    let typo = write_config(&dir, "typo.toml", &SMALL.replace("[grid]", "[grid]\nnodez = 3"));
    let o = run(&["wave", "solve", "--config", &typo], &dir.join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nodez"));

    let negative = write_config(&dir, "neg.toml", &SMALL.replace("scale = 1.0", "scale = -1.0"));
    let o = run(&["wave", "solve", "--config", &negative], &dir.join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("scale"));

    let o = run(&["wave", "solve", "--config", &dir.join("absent.toml").to_string_lossy()], &dir.join("out"));
    assert_eq!(o.status.code(), Some(1));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn invalid_thread_count_is_an_error() {
    let dir = scratch("threads");
    let cfg = write_config(&dir, "small.toml", SMALL);
    let o = Command::new(env!("CARGO_BIN_EXE_wavegap"))
        .args(["wave", "solve", "--config", &cfg])
        .env("WAVEGAP_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("WAVEGAP_THREADS"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn failed_hypothesis_exits_two() {
    let dir = scratch("hyp");
    let text = SMALL.replace("threshold = 0.5", "threshold = 0.3").replace("steepness = 8.0", "steepness = 20.0");
    let cfg = write_config(&dir, "fast.toml", &text);
    let out = dir.join("out");
    let o = run(&["gap", "small-c", "--config", &cfg], &out);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("small_c.json")).unwrap()).unwrap();
    assert_eq!(v["status"], 2);
    assert!(!v["notes"].as_array().unwrap().is_empty());
    std::fs::remove_dir_all(&dir).unwrap();
}
