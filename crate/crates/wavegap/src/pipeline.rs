//! Stage orchestration: model → wave → spectral → gap → small-c → sde.
//! Every stage writes `<output_dir>/<stage>.json` (and plot-ready CSVs)
//! and reports a status: 0 certified, 2 hypothesis failure.

use crate::config::{KappaSource, LoadedConfig, NonlinearitySection, PipelineConfig};
use crate::error::{Error, Result};
use crate::gap::{self, contractivity_m, GapCertificate, GapOptions};
use crate::model::{FixedPoints, Nonlinearity};
use crate::report::{self, Envelope};
use crate::smallc::{self, SmallCCertificate};
use crate::spectral::{self, energy_identity_residual, windowed_test_function, FrozenOperator, SpectralData};
use crate::stochastic::{
    even_bump, run_ensemble, stability_constants, supermartingale_diagnostic, EnsembleConfig, NoiseModel,
    Simulator, StabilityConstants, Supermartingale,
};
use crate::wave::{self, measure_speed_by_evolution, solve_wave, WaveSolution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::{Path, PathBuf};

pub const STATUS_OK: u8 = 0;
pub const STATUS_HYPOTHESIS: u8 = 2;

#[derive(Debug, Clone, Serialize)]
pub struct EvolutionOracle {
    pub c_emp: f64,
    pub t_end: f64,
    pub nodes: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WaveReport {
    pub fixed_points: FixedPoints,
    pub c: f64,
    pub residual: f64,
    pub iterations: usize,
    pub nodes: usize,
    pub half_width: f64,
    pub diffusion: f64,
    /// Closed-form speed for the neural field, `None` otherwise.
    pub c_formula: Option<f64>,
    pub evolution: Option<EvolutionOracle>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub ux_residual: f64,
    pub psi_residual: f64,
    pub d1_goldstone_residual: f64,
    pub z_mu: f64,
    pub z_mu_adjoint: f64,
    pub rho_rates: (f64, f64),
    pub trusted_nodes: usize,
    pub energy_samples: usize,
    /// Largest relative residual of the continuous-form identity.
    pub energy_residual_max: f64,
    /// Largest relative residual with the discrete transport remainder.
    pub energy_discrete_residual_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpeedRow {
    pub beta: f64,
    pub theta: f64,
    pub scale: f64,
    pub lower: f64,
    pub c: f64,
    pub upper: f64,
    pub degenerate: bool,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpeedReport {
    pub rows: Vec<SpeedRow>,
    pub violations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SdeReport {
    pub n_traj: usize,
    pub escapes: usize,
    pub frequency: f64,
    pub wilson_ci: (f64, f64),
    pub wilson_se: f64,
    pub bound: f64,
    pub b_star: f64,
    #[serde(rename = "M_R")]
    pub m_r: f64,
    pub kappa_tilde: f64,
    pub in_hypothesis: bool,
    pub escape_ok: bool,
    pub initial_norm: f64,
    pub dt: f64,
    pub t_max: f64,
    pub modes: usize,
    pub kappa_source: KappaSource,
    /// How `Z` was obtained.
    pub z_method: String,
    pub constants: StabilityConstants,
    pub exit_times: Vec<Option<f64>>,
    pub supermartingale: Supermartingale,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct FullReport {
    pub wave: Option<WaveReport>,
    pub spectrum: Option<SpectrumReport>,
    pub gap: Option<GapCertificate>,
    pub small_c: Option<SmallCCertificate>,
    pub speed: Option<SpeedReport>,
    pub sde: Option<SdeReport>,
    /// Stages that raised an error, with the message.
    pub errors: Vec<(String, String)>,
}

/// A configuration plus the wave and spectral data shared by later stages.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub hash: String,
    pub output_dir: PathBuf,
    sol: Option<WaveSolution>,
    spectral: Option<(FrozenOperator, SpectralData)>,
}

impl Pipeline {
    pub fn new(loaded: LoadedConfig) -> Self {
        let output_dir = loaded.config.output_dir.clone();
        Self { config: loaded.config, hash: loaded.hash, output_dir, sol: None, spectral: None }
    }

    pub fn with_output_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.output_dir = dir.into();
        self
    }

    fn path(&self, file: &str) -> PathBuf {
        self.output_dir.join(file)
    }

    pub fn wave(&mut self) -> Result<&WaveSolution> {
        if self.sol.is_none() {
            let cfg = &self.config;
            self.sol = Some(solve_wave(&cfg.system()?, &cfg.grid()?, None, &cfg.wave_options())?);
        }
        Ok(self.sol.as_ref().expect("solved above"))
    }

    pub fn spectral(&mut self) -> Result<(&WaveSolution, &FrozenOperator, &SpectralData)> {
        if self.spectral.is_none() {
            let opts = self.config.spectral_options();
            let pair = spectral::analyze(self.wave()?, &opts)?;
            self.spectral = Some(pair);
        }
        let (op, data) = self.spectral.as_ref().expect("analyzed above");
        Ok((self.sol.as_ref().expect("solved before analysis"), op, data))
    }

    pub fn wave_report(&mut self) -> Result<WaveReport> {
        let evo_time = self.config.solver.evolution_time;
        let evo_nodes = self.config.solver.evolution_nodes;
        let half_width = self.config.grid.half_width;
        let sol = self.wave()?;
        let c_formula = match sol.system.nonlinearity {
            Nonlinearity::NeuralField { .. } => Some(wave::wave_speed_formula(sol)?),
            Nonlinearity::PhaseTransition { .. } => None,
        };
        let evolution = if evo_time > 0.0 {
            let grid = crate::discretize::Grid::new(half_width, evo_nodes)?;
            let m = measure_speed_by_evolution(&sol.system, &grid, evo_time)?;
            Some(EvolutionOracle { c_emp: m.c, t_end: evo_time, nodes: evo_nodes, dt: m.dt })
        } else {
            None
        };
        let r = WaveReport {
            fixed_points: sol.fixed,
            c: sol.c,
            residual: sol.residual,
            iterations: sol.iterations,
            nodes: sol.grid.n,
            half_width: sol.grid.half_width,
            diffusion: sol.system.diffusion,
            c_formula,
            evolution,
        };
        let sol = self.sol.as_ref().expect("solved above");
        report::write_columns(
            &self.path("wave.csv"),
            &["x", "u", "u_x", "u_xx"],
            &[&sol.grid.x, &sol.u, &sol.ux, &sol.uxx],
        )?;
        Ok(r)
    }

    pub fn spectrum_report(&mut self) -> Result<SpectrumReport> {
        let samples = self.config.spectral.energy_samples;
        let seed = self.config.gap.seed;
        let half_width = self.config.grid.half_width;
        let path = self.path("spectrum.csv");
        let (_, op, data) = self.spectral()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut worst, mut worst_discrete) = (0.0f64, 0.0f64);
        for _ in 0..samples {
            let test = windowed_test_function(&data.x, 0.5 * half_width, &mut rng);
            let e = energy_identity_residual(op, data, &test, half_width)?;
            worst = worst.max(e.residual);
            worst_discrete = worst_discrete.max(e.discrete_residual);
        }
        let r = SpectrumReport {
            ux_residual: data.ux_residual,
            psi_residual: data.psi_residual,
            d1_goldstone_residual: data.d1_goldstone_residual,
            z_mu: data.z_mu,
            z_mu_adjoint: data.z_mu_adjoint,
            rho_rates: data.rho_rates,
            trusted_nodes: data.trusted_indices().count(),
            energy_samples: samples,
            energy_residual_max: worst,
            energy_discrete_residual_max: worst_discrete,
        };
        let trusted: Vec<f64> = data.trusted.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
        let cols: [&[f64]; 9] = [&data.x, &data.ux, &data.psi, &data.rho, &data.nu, &data.mu, &data.mu_star, &data.m, &trusted];
        report::write_columns(&path, &["x", "u_x", "psi", "rho", "nu", "mu", "mu_star", "m", "trusted"], &cols)?;
        Ok(r)
    }

    pub fn gap_certificate(&mut self) -> Result<GapCertificate> {
        let opts = GapOptions { n_samples: self.config.gap.n_samples, seed: self.config.gap.seed };
        let (sol, op, data) = self.spectral()?;
        gap::certify(sol, op, data, &opts)
    }

    pub fn small_c_certificate(&mut self) -> Result<SmallCCertificate> {
        let (sol, op, data) = self.spectral()?;
        let nfe = matches!(sol.system.nonlinearity, Nonlinearity::NeuralField { .. });
        let m = contractivity_m(op, data, &sol.system.kernel)?;
        smallc::certify_small_c(op, data, &sol.grid, &sol.system.kernel, m, nfe)
    }

    /// The sandwich over the configured sweep, or for the configured model
    /// when the sweep is empty. The half-width is scaled with the kernel so
    /// every case sees the same resolution in units of `σ`.
    pub fn speed_report(&self) -> Result<SpeedReport> {
        let cfg = &self.config;
        let cases: Vec<(f64, f64, f64)> = if cfg.speed.pairs.is_empty() {
            let (NonlinearitySection::NeuralField { steepness, threshold }, crate::config::KernelSection::Exponential { scale }) =
                (&cfg.model.nonlinearity, &cfg.model.kernel)
            else {
                return Err(Error::Precondition("speed bounds need a neural field with exponential kernel".into()));
            };
            vec![(*steepness, *threshold, *scale)]
        } else {
            cfg.speed.pairs.iter().flat_map(|[b, t]| cfg.speed.scales.iter().map(move |s| (*b, *t, *s))).collect()
        };
        let mut rows = Vec::with_capacity(cases.len());
        for (beta, theta, scale) in cases {
            let sys = wave::neural_field(beta, theta, scale)?;
            let grid = crate::discretize::Grid::new(cfg.grid.half_width * scale, cfg.grid.nodes)?;
            let sol = solve_wave(&sys, &grid, None, &cfg.wave_options())?;
            let b = wave::speed_bounds(sol.gain()?, &sys.kernel, &sol.fixed)?;
            let holds = if b.degenerate { sol.c.abs() < 1e-6 } else { b.lower <= sol.c && sol.c <= b.upper };
            rows.push(SpeedRow {
                beta,
                theta,
                scale,
                lower: b.lower,
                c: sol.c,
                upper: b.upper,
                degenerate: b.degenerate,
                holds,
            });
        }
        report::write_rows(&self.path("speed_bounds.csv"), &rows)?;
        let violations = rows.iter().filter(|r| !r.holds).count();
        Ok(SpeedReport { rows, violations })
    }

    pub fn sde_report(&mut self) -> Result<SdeReport> {
        let sde = self.config.sde.clone();
        let (sol, op, data) = self.spectral()?;
        let (kappa, z, z_method) = match sde.kappa_source {
            KappaSource::SmallC => {
                let nfe = matches!(sol.system.nonlinearity, Nonlinearity::NeuralField { .. });
                let m = contractivity_m(op, data, &sol.system.kernel)?;
                let cert = smallc::certify_small_c(op, data, &sol.grid, &sol.system.kernel, m, nfe)?;
                (cert.kappa_of_c, cert.z, "small-c route: Z = 2κ₀/Z⁰".to_string())
            }
            KappaSource::MGap => {
                let g = smallc::m_gap(op, data)?;
                let kappa = -(g.lambda + g.tol);
                let z = z_from_quadratic_form(op, data, kappa);
                (kappa, z, "reconstructed: smallest Z with ⟨L û_x, û_x⟩_𝔪 ≤ -κ‖û_x‖²_𝔪 + Z‖û_x‖⁴_𝔪".to_string())
            }
        };
        let m = sde.m.unwrap_or(2.0 * z);
        let consts = stability_constants(sol, kappa, z, m, sde.sigma)?;
        let rate = if consts.kappa_tilde > 0.0 { consts.kappa_tilde } else { kappa.max(1e-3) };
        let dt = sde.dt.unwrap_or(f64::min(0.01, 0.1 / rate));
        let t_max = sde.t_max.unwrap_or(50.0 / rate);
        let noise = NoiseModel::bumps(&sol.grid.x, sde.modes, sde.sigma)?;
        let sim = Simulator::new(sol, noise, m, dt)?;
        let v0 = even_bump(sol, sde.initial_fraction * consts.b_star)?;
        let ens = EnsembleConfig { n_traj: sde.n_traj, t_max, checkpoints: sde.checkpoints, seed: sde.seed };
        let stats = run_ensemble(&sim, &consts, &v0, &ens)?;
        let sm = supermartingale_diagnostic(&stats, consts.kappa_tilde);
        if sde.write_trajectories {
            #[derive(Serialize)]
            struct Row {
                trajectory: usize,
                t: f64,
                norm: f64,
                phase: f64,
            }
            let rows: Vec<Row> = stats
                .trajectories
                .iter()
                .enumerate()
                .flat_map(|(k, tr)| tr.path.iter().map(move |&(t, norm, phase)| Row { trajectory: k, t, norm, phase }))
                .collect();
            report::write_rows(&self.output_dir.join("sde_trajectories.csv"), &rows)?;
        }
        let curve_t: Vec<f64> = sm.curve.iter().map(|c| c.t).collect();
        let curve_m: Vec<f64> = sm.curve.iter().map(|c| c.mean).collect();
        let curve_se: Vec<f64> = sm.curve.iter().map(|c| c.standard_error).collect();
        report::write_columns(
            &self.output_dir.join("sde_supermartingale.csv"),
            &["t", "mean", "standard_error"],
            &[&curve_t, &curve_m, &curve_se],
        )?;
        Ok(SdeReport {
            n_traj: stats.n_traj,
            escapes: stats.escapes,
            frequency: stats.frequency,
            wilson_ci: stats.wilson_ci,
            wilson_se: stats.wilson_se,
            bound: stats.bound,
            b_star: stats.b_star,
            m_r: stats.m_r,
            kappa_tilde: stats.kappa_tilde,
            in_hypothesis: stats.in_hypothesis,
            escape_ok: stats.escape_ok,
            initial_norm: stats.initial_norm,
            dt,
            t_max,
            modes: sde.modes,
            kappa_source: sde.kappa_source,
            z_method,
            exit_times: stats.trajectories.iter().map(|t| t.exit_time).collect(),
            constants: consts,
            supermartingale: sm,
        })
    }

    fn envelope<T: Serialize>(&self, command: &str, result: T, status: u8, notes: Vec<String>) -> Envelope<T> {
        let seed = match command {
            "sde run" => self.config.sde.seed,
            _ => self.config.gap.seed,
        };
        let mut e = Envelope::new(command, &self.config.name, &self.hash, seed, result);
        e.status = status;
        e.notes = notes;
        e
    }

    /// Runs one CLI command, writes its report and returns the status.
    pub fn run_command(&mut self, command: Command) -> Result<u8> {
        let status = match command {
            Command::WaveSolve => {
                let r = self.wave_report()?;
                let e = self.envelope(command.name(), r, STATUS_OK, Vec::new());
                {
                    write(&self.path("wave.json"), &e)?;
                    STATUS_OK
                }
            }
            Command::WaveSpectrum => {
                let r = self.spectrum_report()?;
                let e = self.envelope(command.name(), r, STATUS_OK, Vec::new());
                {
                    write(&self.path("spectrum.json"), &e)?;
                    STATUS_OK
                }
            }
            Command::GapCertify => {
                let r = self.gap_certificate()?;
                let (status, notes) = gap_status(&r);
                let e = self.envelope(command.name(), r, status, notes);
                {
                    write(&self.path("gap.json"), &e)?;
                    status
                }
            }
            Command::GapSmallC => {
                let r = self.small_c_certificate()?;
                let (status, notes) = small_c_status(&r);
                let e = self.envelope(command.name(), r, status, notes);
                {
                    write(&self.path("small_c.json"), &e)?;
                    status
                }
            }
            Command::SpeedBounds => {
                let r = self.speed_report()?;
                let (status, notes) = speed_status(&r);
                let e = self.envelope(command.name(), r, status, notes);
                {
                    write(&self.path("speed_bounds.json"), &e)?;
                    status
                }
            }
            Command::SdeRun => {
                let r = self.sde_report()?;
                let (status, notes) = sde_status(&r);
                let e = self.envelope(command.name(), r, status, notes);
                {
                    write(&self.path("sde.json"), &e)?;
                    status
                }
            }
            Command::ReportAll => return self.run_all(),
        };
        Ok(status)
    }

    /// Every enabled stage; failures of one stage are recorded and the
    /// remaining stages still run.
    pub fn run_all(&mut self) -> Result<u8> {
        let stages = self.config.stages.clone();
        let mut full = FullReport::default();
        let mut status = STATUS_OK;
        let mut notes = Vec::new();
        let mut fold = |s: (u8, Vec<String>), notes: &mut Vec<String>| {
            status = status.max(s.0);
            notes.extend(s.1);
        };
        macro_rules! stage {
            ($on:expr, $name:literal, $call:expr, $slot:ident, $judge:expr) => {
                if $on {
                    match $call {
                        Ok(r) => {
                            fold($judge(&r), &mut notes);
                            full.$slot = Some(r);
                        }
                        Err(e) => full.errors.push(($name.to_string(), e.to_string())),
                    }
                }
            };
        }
        stage!(stages.wave, "wave", self.wave_report(), wave, |_: &WaveReport| (STATUS_OK, Vec::new()));
        stage!(stages.spectrum, "spectrum", self.spectrum_report(), spectrum, |_: &SpectrumReport| (
            STATUS_OK,
            Vec::new()
        ));
        stage!(stages.gap, "gap", self.gap_certificate(), gap, gap_status);
        stage!(stages.small_c, "small_c", self.small_c_certificate(), small_c, small_c_status);
        stage!(stages.speed, "speed", self.speed_report(), speed, speed_status);
        stage!(stages.sde, "sde", self.sde_report(), sde, sde_status);
        let failed = !full.errors.is_empty();
        let e = self.envelope(Command::ReportAll.name(), full, status, notes);
        write(&self.path("report.json"), &e)?;
        if failed {
            let msg = e.result.errors.iter().map(|(s, m)| format!("{s}: {m}")).collect::<Vec<_>>().join("; ");
            return Err(Error::Precondition(format!("stages failed: {msg}")));
        }
        Ok(status)
    }
}

fn write<T: Serialize>(path: &Path, e: &Envelope<T>) -> Result<()> {
    report::write_json(path, e)
}

/// Smallest `Z ≥ 0` with `⟨L# û_x, û_x⟩_𝔪 ≤ -κ‖û_x‖²_𝔪 + Z‖û_x‖⁴_𝔪`.
pub fn z_from_quadratic_form(op: &FrozenOperator, data: &SpectralData, kappa: f64) -> f64 {
    let g = nalgebra::DVector::from_column_slice(&data.ux);
    let lg = &op.l * &g;
    let wm: Vec<f64> = data.m.iter().zip(&data.ux).map(|(m, u)| m * u).collect();
    let form = data.inner(&wm, lg.as_slice());
    let norm_sq = data.inner(&wm, &data.ux);
    ((form + kappa * norm_sq) / (norm_sq * norm_sq)).max(0.0)
}

pub fn gap_status(r: &GapCertificate) -> (u8, Vec<String>) {
    let notes: Vec<String> =
        r.hypotheses.iter().filter(|h| !h.passed).map(|h| format!("{}: {}", h.name, h.detail)).collect();
    (if r.certified { STATUS_OK } else { STATUS_HYPOTHESIS }, notes)
}

pub fn small_c_status(r: &SmallCCertificate) -> (u8, Vec<String>) {
    let mut notes = Vec::new();
    if !r.holds {
        notes.push(format!("|c| = {} is not below c* = {}", r.c_solver.abs(), r.c_star));
    }
    if let Some(n) = r.nfe_condition {
        if !n.holds {
            notes.push(format!("neural-field condition margin {} ≤ 0", n.margin));
        }
    }
    (if r.holds { STATUS_OK } else { STATUS_HYPOTHESIS }, notes)
}

pub fn speed_status(r: &SpeedReport) -> (u8, Vec<String>) {
    let notes: Vec<String> = r
        .rows
        .iter()
        .filter(|row| !row.holds)
        .map(|row| format!("β = {}, θ = {}, σ = {}: c = {} outside [{}, {}]", row.beta, row.theta, row.scale, row.c, row.lower, row.upper))
        .collect();
    (if notes.is_empty() { STATUS_OK } else { STATUS_HYPOTHESIS }, notes)
}

pub fn sde_status(r: &SdeReport) -> (u8, Vec<String>) {
    let mut notes = r.constants.notes.clone();
    notes.push(format!("Z: {}", r.z_method));
    if !r.escape_ok {
        notes.push(format!("escape frequency {} exceeds {} + 3·{}", r.frequency, r.bound, r.wilson_se));
    }
    if r.supermartingale.violations > 0 {
        notes.push(format!("supermartingale band violated at {} checkpoints", r.supermartingale.violations));
    }
    let ok = r.in_hypothesis && r.escape_ok && r.supermartingale.violations == 0;
    (if ok { STATUS_OK } else { STATUS_HYPOTHESIS }, notes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    WaveSolve,
    WaveSpectrum,
    GapCertify,
    GapSmallC,
    SpeedBounds,
    SdeRun,
    ReportAll,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::WaveSolve => "wave solve",
            Command::WaveSpectrum => "wave spectrum",
            Command::GapCertify => "gap certify",
            Command::GapSmallC => "gap small-c",
            Command::SpeedBounds => "speed bounds",
            Command::SdeRun => "sde run",
            Command::ReportAll => "report all",
        }
    }
}

/// 0 certified, 2 hypothesis failure, 1 error.
pub fn exit_code(result: &Result<u8>) -> i32 {
    match result {
        Ok(s) => *s as i32,
        Err(Error::Hypothesis(_)) => 2,
        Err(_) => 1,
    }
}
