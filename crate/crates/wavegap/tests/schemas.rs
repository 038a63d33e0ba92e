use std::path::{Path, PathBuf};
use std::process::Command;

const CONFIG: &str = r#"
name = "schema_check"
[model]
kernel = { family = "exponential", scale = 1.0 }
nonlinearity = { kind = "neural_field", steepness = 8.0, threshold = 0.5 }
[grid]
half_width = 20.0
nodes = 256
[solver]
evolution_time = 5.0
evolution_nodes = 256
[spectral]
energy_samples = 5
[gap]
n_samples = 20
[speed]
pairs = [[12.0, 0.45]]
scales = [1.0]
[sde]
n_traj = 4
t_max = 2.0
checkpoints = 4
write_trajectories = true
"#;

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/schemas")
}

fn validate(report: &Path, schema: &str) {
    let schema: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(schema_dir().join(format!("{schema}.schema.json"))).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let instance: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    let errors: Vec<String> = validator.iter_errors(&instance).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{}: {errors:#?}", report.display());
}

#[test]
fn every_report_matches_its_schema() {
    let dir = std::env::temp_dir().join(format!("wavegap-schemas-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("config.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let out = dir.join("out");
    let commands: [(&[&str], &str); 7] = [
        (&["wave", "solve"], "wave"),
        (&["wave", "spectrum"], "spectrum"),
        (&["gap", "certify"], "gap"),
        (&["gap", "small-c"], "small_c"),
        (&["speed", "bounds"], "speed_bounds"),
        (&["sde", "run"], "sde"),
        (&["report", "all"], "report"),
    ];
    for (args, name) in commands {
        let o = Command::new(env!("CARGO_BIN_EXE_wavegap"))
            .args(args)
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(matches!(o.status.code(), Some(0 | 2)), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        validate(&out.join(format!("{name}.json")), name);
    }
    for csv in ["wave.csv", "spectrum.csv", "speed_bounds.csv", "sde_supermartingale.csv", "sde_trajectories.csv"] {
        let mut r = csv::Reader::from_path(out.join(csv)).unwrap();
        assert!(r.records().count() > 0, "{csv} is empty");
    }
    std::fs::remove_dir_all(&dir).unwrap();
}
