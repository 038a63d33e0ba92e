//! Drives the pipeline from an inline TOML configuration and writes the
//! reports to a temporary directory.

use wavegap::config;
use wavegap::pipeline::{Command, Pipeline};

const CONFIG: &str = r#"
name = "inline_nfe"

[model]
diffusion = 0.0
kernel = { family = "exponential", scale = 1.0 }
nonlinearity = { kind = "neural_field", steepness = 12.0, threshold = 0.45 }

[grid]
half_width = 20.0
nodes = 512

[gap]
n_samples = 100

[stages]
speed = false
sde = false
"#;

fn main() -> wavegap::Result<()> {
    let loaded = config::parse(CONFIG)?;
    println!("config {} sha256 {}", loaded.config.name, loaded.hash);
    let out = std::env::temp_dir().join("wavegap-config-pipeline");
    let mut p = Pipeline::new(loaded).with_output_dir(&out);
    for cmd in [Command::WaveSolve, Command::GapCertify, Command::GapSmallC] {
        let status = p.run_command(cmd)?;
        println!("{:<14} status {status}", cmd.name());
    }
    for entry in std::fs::read_dir(&out)? {
        println!("  wrote {}", entry?.path().display());
    }
    Ok(())
}
