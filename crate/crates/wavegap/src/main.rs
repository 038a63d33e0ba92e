use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use wavegap::config;
use wavegap::pipeline::{exit_code, Command, Pipeline};

/// Traveling waves of nonlocal bistable equations and their stability.
///
/// Worker threads are taken from `WAVEGAP_THREADS` (default: all cores).
#[derive(Parser)]
#[command(name = "wavegap", version)]
struct Cli {
    #[command(subcommand)]
    group: Group,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Group {
    /// Profile and speed.
    #[command(subcommand)]
    Wave(WaveCmd),
    /// Spectral-gap certificates.
    #[command(subcommand)]
    Gap(GapCmd),
    /// Speed bounds for the neural field.
    #[command(subcommand)]
    Speed(SpeedCmd),
    /// Stochastic stability.
    #[command(subcommand)]
    Sde(SdeCmd),
    /// All enabled stages.
    #[command(subcommand)]
    Report(ReportCmd),
}

#[derive(Subcommand)]
enum WaveCmd {
    Solve(Common),
    Spectrum(Common),
}

#[derive(Subcommand)]
enum GapCmd {
    Certify(Common),
    #[command(name = "small-c")]
    SmallC(Common),
}

#[derive(Subcommand)]
enum SpeedCmd {
    Bounds(Common),
}

#[derive(Subcommand)]
enum SdeCmd {
    Run(Common),
}

#[derive(Subcommand)]
enum ReportCmd {
    All(Common),
}

const THREADS_VAR: &str = "WAVEGAP_THREADS";

fn init_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| format!("{THREADS_VAR} must be a positive integer, got {raw:?}"))?;
    if n == 0 {
        return Err(format!("{THREADS_VAR} must be positive"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let (command, common) = match cli.group {
        Group::Wave(WaveCmd::Solve(c)) => (Command::WaveSolve, c),
        Group::Wave(WaveCmd::Spectrum(c)) => (Command::WaveSpectrum, c),
        Group::Gap(GapCmd::Certify(c)) => (Command::GapCertify, c),
        Group::Gap(GapCmd::SmallC(c)) => (Command::GapSmallC, c),
        Group::Speed(SpeedCmd::Bounds(c)) => (Command::SpeedBounds, c),
        Group::Sde(SdeCmd::Run(c)) => (Command::SdeRun, c),
        Group::Report(ReportCmd::All(c)) => (Command::ReportAll, c),
    };
    let result = config::load(&common.config).and_then(|mut loaded| {
        if let Some(seed) = common.seed {
            loaded.config.override_seed(seed);
        }
        let mut p = Pipeline::new(loaded);
        if let Some(out) = common.out {
            p = p.with_output_dir(out);
        }
        let status = p.run_command(command)?;
        eprintln!("{}: status {} ({})", command.name(), status, p.output_dir.display());
        Ok(status)
    });
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    ExitCode::from(exit_code(&result) as u8)
}
