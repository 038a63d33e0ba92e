//! Run configuration, read from TOML. Unknown keys are rejected and every
//! numeric field is range-checked before any stage runs.

use crate::discretize::Grid;
use crate::error::{Error, Result};
use crate::model::{BistableSystem, Gain, Kernel, Nonlinearity};
use crate::spectral::SpectralOptions;
use crate::wave::WaveOptions;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub name: String,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub model: ModelSection,
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub spectral: SpectralSection,
    #[serde(default)]
    pub gap: GapSection,
    #[serde(default)]
    pub speed: SpeedSection,
    #[serde(default)]
    pub sde: SdeSection,
    #[serde(default)]
    pub stages: Stages,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default)]
    pub diffusion: f64,
    pub kernel: KernelSection,
    pub nonlinearity: NonlinearitySection,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSection {
    Exponential { scale: f64 },
    Gaussian { scale: f64 },
    Bump { half_width: f64 },
    Tabulated { xs: Vec<f64>, ws: Vec<f64> },
    /// Two-column CSV `x,w`; a relative path is taken from the config file's directory.
    Table { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearitySection {
    /// Sigmoid gain `1/(1 + exp(-β(u - θ)))`.
    NeuralField { steepness: f64, threshold: f64 },
    PhaseTransition { lambda: f64, k: f64, a: f64 },
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub half_width: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
    pub coarse_nodes: usize,
    pub root_bracket: [f64; 2],
    /// Horizon of the evolution oracle for the speed; 0 skips it.
    pub evolution_time: f64,
    /// Nodes of the evolution grid (same half-width).
    pub evolution_nodes: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let w = WaveOptions::default();
        Self {
            tol: w.tol,
            max_iter: w.max_iter,
            coarse_nodes: w.coarse_nodes,
            root_bracket: [w.root_bracket.0, w.root_bracket.1],
            evolution_time: 0.0,
            evolution_nodes: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralSection {
    pub buffer: f64,
    pub threshold: f64,
    pub null_tol: f64,
    /// Windowed test functions for the energy identity.
    pub energy_samples: usize,
}

impl Default for SpectralSection {
    fn default() -> Self {
        let s = SpectralOptions::default();
        Self { buffer: s.buffer, threshold: s.threshold, null_tol: s.null_tol, energy_samples: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct GapSection {
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for GapSection {
    fn default() -> Self {
        Self { n_samples: 1000, seed: 0 }
    }
}

/// `(β, θ)` pairs crossed with kernel scales for the speed sandwich.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpeedSection {
    pub pairs: Vec<[f64; 2]>,
    pub scales: Vec<f64>,
}

impl Default for SpeedSection {
    fn default() -> Self {
        Self { pairs: Vec::new(), scales: vec![0.5, 1.0, 2.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaSource {
    /// `κ(c)` with `Z = 2κ₀/Z⁰`.
    SmallC,
    /// `κ = -(λ + tol)` from the projected 𝔪-symmetric eigensolve, `Z`
    /// reconstructed from the quadratic form on `span{û_x}`.
    MGap,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdeSection {
    pub sigma: f64,
    /// Relaxation rate; `None` uses `2Z`.
    pub m: Option<f64>,
    pub modes: usize,
    pub n_traj: usize,
    /// `None` uses `50/κ̃`.
    pub t_max: Option<f64>,
    /// `None` uses `min(0.01, 0.1/κ̃)`.
    pub dt: Option<f64>,
    pub seed: u64,
    /// `‖ṽ(0)‖_𝔪` as a fraction of `b*`.
    pub initial_fraction: f64,
    pub checkpoints: usize,
    pub kappa_source: KappaSource,
    pub write_trajectories: bool,
}

impl Default for SdeSection {
    fn default() -> Self {
        Self {
            sigma: 0.05,
            m: None,
            modes: 32,
            n_traj: 500,
            t_max: None,
            dt: None,
            seed: 0,
            initial_fraction: 0.25,
            checkpoints: 50,
            kappa_source: KappaSource::SmallC,
            write_trajectories: false,
        }
    }
}

/// Stages run by `report all`.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stages {
    pub wave: bool,
    pub spectrum: bool,
    pub gap: bool,
    pub small_c: bool,
    pub speed: bool,
    pub sde: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Self { wave: true, spectrum: true, gap: true, small_c: true, speed: true, sde: true }
    }
}

/// A validated configuration and the hash of its source text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, col)
}

/// Parses and validates TOML text.
pub fn parse(text: &str) -> Result<LoadedConfig> {
    parse_relative(text, Path::new(""))
}

fn parse_relative(text: &str, base: &Path) -> Result<LoadedConfig> {
    let mut config: PipelineConfig = toml::from_str(text).map_err(|e| {
        let msg = e.message().trim().to_string();
        // name the offending key: serde reports it in backticks
        let field = msg.split('`').nth(1).unwrap_or("config").to_string();
        let at = e.span().map(|s| line_col(text, s.start));
        let message = match at {
            Some((l, c)) => format!("{msg} (line {l}, column {c})"),
            None => msg,
        };
        Error::Config { field, message }
    })?;
    if let KernelSection::Table { path } = &mut config.model.kernel {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
    config.validate()?;
    Ok(LoadedConfig { config, hash: sha256_hex(text.as_bytes()) })
}

pub fn load(path: &Path) -> Result<LoadedConfig> {
    parse_relative(&std::fs::read_to_string(path)?, path.parent().unwrap_or(Path::new("")))
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be finite and > 0, got {v}")))
    }
}

fn at_least(field: &str, v: usize, min: usize) -> Result<()> {
    if v >= min {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be at least {min}, got {v}")))
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::config("name", "must not be empty"));
        }
        self.system()?;
        self.grid()?;
        let s = &self.solver;
        positive("solver.tol", s.tol)?;
        at_least("solver.max_iter", s.max_iter, 1)?;
        at_least("solver.coarse_nodes", s.coarse_nodes, 16)?;
        if !(s.root_bracket[0] < s.root_bracket[1]) || s.root_bracket.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("solver.root_bracket", "needs finite lo < hi"));
        }
        if !(s.evolution_time >= 0.0 && s.evolution_time.is_finite()) {
            return Err(Error::config("solver.evolution_time", "must be finite and >= 0"));
        }
        at_least("solver.evolution_nodes", s.evolution_nodes, 16)?;
        let sp = &self.spectral;
        if !(sp.buffer >= 0.0 && sp.buffer < 0.5) {
            return Err(Error::config("spectral.buffer", format!("must lie in [0, 0.5), got {}", sp.buffer)));
        }
        if !(sp.threshold > 0.0 && sp.threshold < 1.0) {
            return Err(Error::config("spectral.threshold", format!("must lie in (0, 1), got {}", sp.threshold)));
        }
        positive("spectral.null_tol", sp.null_tol)?;
        at_least("gap.n_samples", self.gap.n_samples, 1)?;
        for (i, [beta, theta]) in self.speed.pairs.iter().enumerate() {
            positive(&format!("speed.pairs[{i}].beta"), *beta)?;
            if !(*theta > 0.0 && *theta < 1.0) {
                return Err(Error::config(format!("speed.pairs[{i}].theta"), format!("must lie in (0, 1), got {theta}")));
            }
        }
        for (i, s) in self.speed.scales.iter().enumerate() {
            positive(&format!("speed.scales[{i}]"), *s)?;
        }
        let sde = &self.sde;
        if !(sde.sigma >= 0.0 && sde.sigma.is_finite()) {
            return Err(Error::config("sde.sigma", format!("must be finite and >= 0, got {}", sde.sigma)));
        }
        if let Some(m) = sde.m {
            positive("sde.m", m)?;
        }
        at_least("sde.modes", sde.modes, 1)?;
        at_least("sde.n_traj", sde.n_traj, 1)?;
        if let Some(t) = sde.t_max {
            positive("sde.t_max", t)?;
        }
        if let Some(dt) = sde.dt {
            positive("sde.dt", dt)?;
        }
        if !(sde.initial_fraction >= 0.0 && sde.initial_fraction < 1.0) {
            return Err(Error::config("sde.initial_fraction", format!("must lie in [0, 1), got {}", sde.initial_fraction)));
        }
        at_least("sde.checkpoints", sde.checkpoints, 1)?;
        Ok(())
    }

    pub fn kernel(&self) -> Result<Kernel> {
        kernel_from(&self.model.kernel)
    }

    pub fn system(&self) -> Result<BistableSystem> {
        let kernel = self.kernel()?;
        let nl = match self.model.nonlinearity {
            NonlinearitySection::NeuralField { steepness, threshold } => {
                if !(threshold > 0.0 && threshold < 1.0) {
                    return Err(Error::config(
                        "model.nonlinearity.threshold",
                        format!("must lie in (0, 1), got {threshold}"),
                    ));
                }
                Nonlinearity::NeuralField { gain: Gain::sigmoid(steepness, threshold)? }
            }
            NonlinearitySection::PhaseTransition { lambda, k, a } => {
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return Err(Error::config("model.nonlinearity.lambda", "must be finite and >= 0"));
                }
                positive("model.nonlinearity.k", k)?;
                if !(a > 0.0 && a < 1.0) {
                    return Err(Error::config("model.nonlinearity.a", format!("must lie in (0, 1), got {a}")));
                }
                Nonlinearity::PhaseTransition { lambda, k, a }
            }
        };
        BistableSystem::new(kernel, nl, self.model.diffusion)
    }

    pub fn grid(&self) -> Result<Grid> {
        positive("grid.half_width", self.grid.half_width)?;
        at_least("grid.nodes", self.grid.nodes, 16)?;
        Grid::new(self.grid.half_width, self.grid.nodes)
    }

    pub fn wave_options(&self) -> WaveOptions {
        let s = &self.solver;
        WaveOptions {
            tol: s.tol,
            max_iter: s.max_iter,
            coarse_nodes: s.coarse_nodes,
            root_bracket: (s.root_bracket[0], s.root_bracket[1]),
        }
    }

    pub fn spectral_options(&self) -> SpectralOptions {
        let s = &self.spectral;
        SpectralOptions { buffer: s.buffer, threshold: s.threshold, null_tol: s.null_tol }
    }

    /// Replaces every seed in the file.
    pub fn override_seed(&mut self, seed: u64) {
        self.gap.seed = seed;
        self.sde.seed = seed;
    }
}

fn kernel_from(k: &KernelSection) -> Result<Kernel> {
    match k {
        KernelSection::Exponential { scale } => Kernel::exponential(*scale),
        KernelSection::Gaussian { scale } => Kernel::gaussian(*scale),
        KernelSection::Bump { half_width } => Kernel::bump(*half_width),
        KernelSection::Tabulated { xs, ws } => Kernel::tabulated(xs.clone(), ws.clone()),
        KernelSection::Table { path } => Kernel::from_csv(path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
[model.kernel]
family = "exponential"
scale = 1.0
[model.nonlinearity]
kind = "neural_field"
steepness = 20.0
threshold = 0.4
[grid]
half_width = 20.0
nodes = 256
"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.config.sde.n_traj, 500);
        assert_eq!(c.config.gap.n_samples, 1000);
        assert_eq!(c.hash.len(), 64);
        assert_eq!(c.hash, parse(MINIMAL).unwrap().hash);
        assert_ne!(c.hash, parse(&MINIMAL.replace("256", "512")).unwrap().hash);
    }

    #[test]
    fn missing_kernel_scale_names_the_field() {
        let text = MINIMAL.replace("scale = 1.0\n", "");
        match parse(&text) {
            Err(Error::Config { field, message }) => {
                assert_eq!(field, "scale", "{message}");
                assert!(message.contains("line"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("[grid]", "[grid]\nspacing = 0.1");
        assert!(matches!(parse(&text), Err(Error::Config { field, .. }) if field == "spacing"));
        let text = MINIMAL.replace("name = \"t\"", "name = \"t\"\ncolour = 1");
        assert!(matches!(parse(&text), Err(Error::Config { .. })));
    }

    #[test]
    fn ranges_are_checked() {
        for (from, to, field) in [
            ("scale = 1.0", "scale = -1.0", "kernel.scale"),
            ("threshold = 0.4", "threshold = 1.5", "model.nonlinearity.threshold"),
            ("nodes = 256", "nodes = 4", "grid.nodes"),
            ("half_width = 20.0", "half_width = 0.0", "grid.half_width"),
        ] {
            match parse(&MINIMAL.replace(from, to)) {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field),
                other => panic!("{to}: {other:?}"),
            }
        }
        let sde = format!("{MINIMAL}[sde]\nsigma = -0.1\n");
        assert!(matches!(parse(&sde), Err(Error::Config { field, .. }) if field == "sde.sigma"));
    }

    #[test]
    fn kernel_table_is_read_relative_to_the_config() {
        let dir = std::env::temp_dir().join(format!("wavegap-config-table-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let rows: String = (-400..=400)
            .map(|i| {
                let x = i as f64 * 0.025;
                format!("{x},{}\n", 0.5 * (-x.abs()).exp())
            })
            .collect();
        std::fs::write(dir.join("w.csv"), format!("x,w\n{rows}")).unwrap();
        let text = MINIMAL.replace("family = \"exponential\"\nscale = 1.0", "family = \"table\"\npath = \"w.csv\"");
        let cfgpath = dir.join("c.toml");
        std::fs::write(&cfgpath, &text).unwrap();
        let k = load(&cfgpath).unwrap().config.kernel().unwrap();
        assert!((k.value(0.5) - 0.5 * (-0.5f64).exp()).abs() < 1e-3, "{}", k.value(0.5));
        assert!(parse(&text).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn seed_override_reaches_every_stage() {
        let mut c = parse(MINIMAL).unwrap().config;
        c.override_seed(42);
        assert_eq!((c.gap.seed, c.sde.seed), (42, 42));
    }
}
