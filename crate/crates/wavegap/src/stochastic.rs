//! Monte-Carlo check of long-term stability for the stochastic neural field
//! `du = (-u + w*F(u)) dt + Σ(ṽ) dW` with a phase-tracked reference wave.
//!
//! The reference is `û(x - ct - C^m(t))` with
//! `Ċ^m = -m⟨ṽ, û_x(· - ct - C^m)⟩_{𝔪_t}`; see [`Simulator`].

use crate::discretize::{diff_matrices, Closure, SparseRows};
use crate::error::{Error, Result};
use crate::linalg::{thomas, MonotoneCubic};
use crate::model::Gain;
use crate::wave::WaveSolution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

/// Finite-rank multiplicative noise `Σ(v)[e_k] = σ λ_k v φ_k`.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    pub sigma: f64,
    pub modes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl NoiseModel {
    /// `K` raised-cosine bumps of unit height centred on an even tiling of
    /// `[x_0, x_{n-1}]`, with `λ_k = 1/√K`.
    pub fn bumps(x: &[f64], k: usize, sigma: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("sde.modes", "need at least one noise mode"));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::config("sde.sigma", format!("must be non-negative, got {sigma}")));
        }
        let (lo, hi) = (x[0], x[x.len() - 1]);
        let spacing = (hi - lo) / k as f64;
        let modes = (0..k)
            .map(|j| {
                let centre = lo + (j as f64 + 0.5) * spacing;
                x.iter()
                    .map(|&xi| {
                        let s = (xi - centre) / spacing;
                        if s.abs() >= 1.0 {
                            0.0
                        } else {
                            (0.5 * std::f64::consts::PI * s).cos().powi(2)
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self { sigma, modes, weights: vec![1.0 / (k as f64).sqrt(); k] })
    }

    /// `Σ_k λ_k² ‖φ_k‖∞²`, at most 1 by construction.
    pub fn weight_budget(&self) -> f64 {
        self.modes
            .iter()
            .zip(&self.weights)
            .map(|(m, l)| l * l * m.iter().fold(0.0f64, |a, v| a.max(v.abs())).powi(2))
            .sum()
    }

    /// `Σ(v) dW = σ v Σ_k λ_k φ_k dW_k`.
    pub fn increment(&self, v: &[f64], dw: &[f64]) -> Vec<f64> {
        let mut field = vec![0.0; v.len()];
        for ((m, l), w) in self.modes.iter().zip(&self.weights).zip(dw) {
            let a = self.sigma * l * w;
            for (f, p) in field.iter_mut().zip(m) {
                *f += a * p;
            }
        }
        field.iter().zip(v).map(|(f, v)| f * v).collect()
    }

    /// `Σ_k ‖Σ(v) e_k‖²` in the weighted norm `Σ h·weight·(·)²`.
    pub fn hilbert_schmidt_sq(&self, v: &[f64], weight: &[f64], h: f64) -> f64 {
        self.modes
            .iter()
            .zip(&self.weights)
            .map(|(m, l)| {
                let a = self.sigma * l;
                h * (0..v.len()).map(|i| weight[i] * (a * v[i] * m[i]).powi(2)).sum::<f64>()
            })
            .sum()
    }
}

/// `R = w * (F(û + v) - F(û) - F'(û) v)`, with `v` vanishing off the grid.
pub fn rest_term(sol: &WaveSolution, gain: &Gain, u_ref: &[f64], v: &[f64]) -> Vec<f64> {
    let taylor: Vec<f64> = u_ref
        .iter()
        .zip(v)
        .map(|(&u, &v)| gain.f(u + v) - gain.f(u) - gain.df(u) * v)
        .collect();
    sol.conv.convolve_zero_extended(&taylor)
}

/// Constants of the stochastic stability estimate.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityConstants {
    pub kappa: f64,
    pub z: f64,
    pub m: f64,
    pub sigma: f64,
    /// `M_R = (¼‖w‖∞‖F''‖∞²‖𝔪‖∞/(min𝔪)²)^{1/2}`.
    pub m_r: f64,
    pub b_star: f64,
    pub kappa_tilde: f64,
    /// `‖𝔪_x/𝔪‖∞`.
    pub log_m_x: f64,
    /// `‖𝔪‖∞‖𝔪⁻¹‖∞`.
    pub m_ratio: f64,
    /// `‖û_x‖_𝔪`.
    pub ux_norm: f64,
    pub in_hypothesis: bool,
    pub notes: Vec<String>,
}

/// Evaluates `M_R`, `b*`, `κ̃` and the hypotheses `κ̃ > 0`, `m > Z`.
pub fn stability_constants(sol: &WaveSolution, kappa: f64, z: f64, m: f64, sigma: f64) -> Result<StabilityConstants> {
    let gain = sol.gain()?;
    let (a1, a2) = (sol.fixed.a1, sol.fixed.a2);
    let dens: Vec<f64> = sol.u.iter().map(|&u| gain.df(u)).collect();
    let m_max = dens.iter().cloned().fold(0.0, f64::max);
    let m_min = dens.iter().cloned().fold(f64::INFINITY, f64::min).min(gain.df(a1)).min(gain.df(a2));
    if !(m_min > 0.0) {
        return Err(Error::NonPositive { what: "inf 𝔪", value: m_min });
    }
    let span = a2 - a1;
    let f2 = gain.sup_d2f(a1 - 10.0 * span, a2 + 10.0 * span);
    let m_r = (0.25 * sol.system.kernel.sup() * f2 * f2 * m_max / (m_min * m_min)).sqrt();
    let log_m_x = sol
        .u
        .iter()
        .zip(&sol.ux)
        .map(|(&u, &ux)| (gain.d2f(u) / gain.df(u) * ux).abs())
        .fold(0.0, f64::max);
    let ux_norm = (sol.grid.h * dens.iter().zip(&sol.ux).map(|(d, g)| d * g * g).sum::<f64>()).sqrt();
    let m_ratio = m_max / m_min;
    let b_star = kappa / (2.0 * m_r + m * ux_norm * log_m_x);
    let kappa_tilde = kappa - (sol.c * log_m_x).abs() - sigma * sigma * m_ratio;
    let mut notes = Vec::new();
    if !(kappa_tilde > 0.0) {
        notes.push(format!("κ̃ = {kappa_tilde:e} ≤ 0"));
    }
    if !(m > z) {
        notes.push(format!("m = {m} ≤ Z = {z}"));
    }
    Ok(StabilityConstants {
        kappa,
        z,
        m,
        sigma,
        m_r,
        b_star,
        kappa_tilde,
        log_m_x,
        m_ratio,
        ux_norm,
        in_hypothesis: notes.is_empty(),
        notes,
    })
}

/// Simulation state in the frame `ξ = x - ct - C^m(t)` attached to the
/// reference, where `ṽ(t, x) = v(t, ξ)` and `𝔪_t(x) = 𝔪(ξ)`.
#[derive(Debug, Clone)]
pub struct PhaseState {
    pub t: f64,
    /// Phase correction `C^m`.
    pub phase: f64,
    pub v: Vec<f64>,
}

/// Semi-implicit Euler–Maruyama for
/// `dv = [(c + Ċ) D1 v + Ċ D1 û - v + w*(F(û + v) - F(û))] dt + Σ(v) dW`,
/// `Ċ = -m⟨v, û_x⟩_𝔪`. The transport `c D1 v` and `-v` are implicit and
/// `D1` is the operator of the wave solver, so `v ≡ 0` is an exact fixed
/// point and the solver residual never enters `v`.
pub struct Simulator<'a> {
    sol: &'a WaveSolution,
    gain: &'a Gain,
    d1: SparseRows,
    dens: Vec<f64>,
    noise: NoiseModel,
    m: f64,
    dt: f64,
    /// Tridiagonal form of `(1 + dt) I - dt c D1`.
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
    /// Row-1 multiples used to clear the third entry of each boundary row.
    elim: (f64, f64),
    blowup: f64,
}

impl<'a> Simulator<'a> {
    pub fn new(sol: &'a WaveSolution, noise: NoiseModel, m: f64, dt: f64) -> Result<Self> {
        let gain = sol.gain()?;
        if sol.system.diffusion != 0.0 {
            return Err(Error::Precondition("the stochastic neural field has d = 0".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config("sde.dt", format!("must be positive, got {dt}")));
        }
        if noise.modes.iter().any(|p| p.len() != sol.grid.n) {
            return Err(Error::Shape { expected: sol.grid.n, got: noise.modes[0].len() });
        }
        let n = sol.grid.n;
        let (d1, _) = diff_matrices(&sol.grid, Closure::OneSided);
        let c = sol.c;
        let mut rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| {
                let mut r: Vec<(usize, f64)> = d1.row(i).map(|(j, a)| (j, -dt * c * a)).collect();
                match r.iter_mut().find(|e| e.0 == i) {
                    Some(e) => e.1 += 1.0 + dt,
                    None => r.push((i, 1.0 + dt)),
                }
                r
            })
            .collect();
        let get = |r: &[(usize, f64)], j: usize| r.iter().find(|e| e.0 == j).map_or(0.0, |e| e.1);
        let clear = |rows: &mut Vec<Vec<(usize, f64)>>, target: usize, helper: usize, col: usize| -> f64 {
            let (a, b) = (get(&rows[target], col), get(&rows[helper], col));
            if a == 0.0 {
                return 0.0;
            }
            let k = a / b;
            let helper_row = rows[helper].clone();
            for (j, v) in helper_row {
                match rows[target].iter_mut().find(|e| e.0 == j) {
                    Some(e) => e.1 -= k * v,
                    None => rows[target].push((j, -k * v)),
                }
            }
            k
        };
        let e0 = clear(&mut rows, 0, 1, 2);
        let e1 = clear(&mut rows, n - 1, n - 2, n - 3);
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        for i in 0..n {
            diag[i] = get(&rows[i], i);
            if i > 0 {
                sub[i] = get(&rows[i], i - 1);
            }
            if i + 1 < n {
                sup[i] = get(&rows[i], i + 1);
            }
        }
        let blowup = 10.0 * (sol.fixed.a2 - sol.fixed.a1 + 1.0);
        let dens = sol.u.iter().map(|&u| gain.df(u)).collect();
        Ok(Self { sol, gain, d1, dens, noise, m, dt, sub, diag, sup, elim: (e0, e1), blowup })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `(‖v‖_𝔪, ⟨v, û_x⟩_𝔪)`.
    fn moments(&self, v: &[f64]) -> (f64, f64) {
        let h = self.sol.grid.h;
        let (mut nn, mut proj) = (0.0, 0.0);
        for i in 0..v.len() {
            nn += self.dens[i] * v[i] * v[i];
            proj += self.dens[i] * v[i] * self.sol.ux[i];
        }
        ((h * nn).sqrt(), h * proj)
    }

    /// `‖ṽ‖_{𝔪_t}`.
    pub fn deviation_norm(&self, state: &PhaseState) -> f64 {
        self.moments(&state.v).0
    }

    pub fn initial_state(&self, perturbation: &[f64]) -> PhaseState {
        PhaseState { t: 0.0, phase: 0.0, v: perturbation.to_vec() }
    }

    /// `u(t, x)` at lab-frame points by monotone cubic interpolation of
    /// `û + v` at `x - ct - C^m`, constant beyond the grid.
    pub fn lab_frame(&self, state: &PhaseState, x: &[f64]) -> Vec<f64> {
        let g = &self.sol.grid;
        let u: Vec<f64> = self.sol.u.iter().zip(&state.v).map(|(a, b)| a + b).collect();
        let profile = MonotoneCubic::uniform(g.x[0], g.h, &u);
        let shift = self.sol.c * state.t + state.phase;
        x.iter().map(|&xi| profile.eval(xi - shift)).collect()
    }

    /// Inverse of [`lab_frame`](Self::lab_frame): the deviation of a
    /// lab-frame profile sampled on the grid from the reference at `state`.
    pub fn deviation_from_lab(&self, state: &PhaseState, u_lab: &[f64]) -> Vec<f64> {
        let g = &self.sol.grid;
        let profile = MonotoneCubic::uniform(g.x[0], g.h, u_lab);
        let shift = self.sol.c * state.t + state.phase;
        g.x.iter().zip(&self.sol.u).map(|(&xi, u)| profile.eval(xi + shift) - u).collect()
    }

    /// One semi-implicit Euler–Maruyama step followed by an explicit Euler
    /// step of the phase. Returns the new state and its deviation norm.
    pub fn step<R: Rng>(&self, state: &PhaseState, rng: &mut R) -> Result<(PhaseState, f64)> {
        let sol = self.sol;
        let n = sol.grid.n;
        let dt = self.dt;
        let v = &state.v;
        let (_, proj) = self.moments(v);
        let cdot = -self.m * proj;
        let diff: Vec<f64> = sol.u.iter().zip(v).map(|(&u, &v)| self.gain.f(u + v) - self.gain.f(u)).collect();
        let z = sol.conv.convolve_fft(&diff, 0.0, 0.0)?;
        let dv = self.d1.apply(v);
        let sqdt = dt.sqrt();
        let dw: Vec<f64> = (0..self.noise.modes.len()).map(|_| sqdt * rng.sample::<f64, _>(StandardNormal)).collect();
        let mut rhs: Vec<f64> = (0..n).map(|i| v[i] + dt * (z[i] + cdot * (dv[i] + sol.ux[i]))).collect();
        if self.noise.sigma > 0.0 {
            for (r, e) in rhs.iter_mut().zip(self.noise.increment(v, &dw)) {
                *r += e;
            }
        }
        rhs[0] -= self.elim.0 * rhs[1];
        rhs[n - 1] -= self.elim.1 * rhs[n - 2];
        let v = thomas(&self.sub, &self.diag, &self.sup, &rhs);
        if let Some(big) = v.iter().zip(&sol.u).map(|(v, u)| (v + u).abs()).find(|a| !(*a <= self.blowup)) {
            return Err(Error::Blowup { t: state.t + dt, norm: big });
        }
        let next = PhaseState { t: state.t + dt, phase: state.phase + dt * cdot, v };
        let norm = self.deviation_norm(&next);
        Ok((next, norm))
    }
}

/// Outcome of one trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub exit_time: Option<f64>,
    /// `(t, ‖ṽ‖_{𝔪_t}, C^m)` at the checkpoints, frozen after exit.
    pub path: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub n_traj: usize,
    pub t_max: f64,
    pub checkpoints: usize,
    pub seed: u64,
}

/// Runs one trajectory from `û + perturbation` until `‖ṽ‖ ≥ b*` or `t_max`.
pub fn run_trajectory(
    sim: &Simulator,
    perturbation: &[f64],
    b_star: f64,
    cfg: &EnsembleConfig,
    index: u64,
) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let steps = (cfg.t_max / sim.dt).ceil() as usize;
    let every = (steps / cfg.checkpoints.max(1)).max(1);
    let mut state = sim.initial_state(perturbation);
    let mut norm = sim.deviation_norm(&state);
    let mut path = vec![(0.0, norm, 0.0)];
    let mut exit_time = (norm >= b_star).then_some(0.0);
    let mut k = 0;
    while exit_time.is_none() && k < steps {
        let (next, nn) = sim.step(&state, &mut rng)?;
        state = next;
        norm = nn;
        k += 1;
        if norm >= b_star {
            exit_time = Some(state.t);
        }
        if k % every == 0 || exit_time.is_some() {
            path.push((state.t, norm, state.phase));
        }
    }
    Ok(Trajectory { exit_time, path })
}

/// Wilson score interval for `k` successes in `n` trials at `z` standard
/// deviations.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let centre = (p + z * z / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Half-width of the one-standard-deviation Wilson interval.
pub fn wilson_standard_error(k: usize, n: usize) -> f64 {
    let (lo, hi) = wilson_interval(k, n, 1.0);
    0.5 * (hi - lo)
}

#[derive(Debug, Clone, Serialize)]
pub struct SdeRunStats {
    pub n_traj: usize,
    pub escapes: usize,
    pub frequency: f64,
    /// 95% Wilson interval.
    pub wilson_ci: (f64, f64),
    pub wilson_se: f64,
    /// `‖ṽ(0)‖²_𝔪 / (b*)²`.
    pub bound: f64,
    pub initial_norm: f64,
    pub b_star: f64,
    #[serde(rename = "M_R")]
    pub m_r: f64,
    pub kappa_tilde: f64,
    pub in_hypothesis: bool,
    pub dt: f64,
    pub t_max: f64,
    /// Escape frequency within `bound + 3·wilson_se`.
    pub escape_ok: bool,
    #[serde(skip)]
    pub trajectories: Vec<Trajectory>,
}

/// Runs `n_traj` trajectories in parallel; trajectory `k` draws from stream
/// `k` of the master seed, so results do not depend on the thread count.
pub fn run_ensemble(
    sim: &Simulator,
    consts: &StabilityConstants,
    perturbation: &[f64],
    cfg: &EnsembleConfig,
) -> Result<SdeRunStats> {
    let initial_norm = sim.deviation_norm(&sim.initial_state(perturbation));
    let trajectories: Vec<Trajectory> = (0..cfg.n_traj)
        .into_par_iter()
        .map(|k| run_trajectory(sim, perturbation, consts.b_star, cfg, k as u64))
        .collect::<Result<_>>()?;
    let escapes = trajectories.iter().filter(|t| t.exit_time.is_some()).count();
    let n = cfg.n_traj;
    let frequency = if n > 0 { escapes as f64 / n as f64 } else { 0.0 };
    let bound = (initial_norm / consts.b_star).powi(2);
    let wilson_se = wilson_standard_error(escapes, n);
    Ok(SdeRunStats {
        n_traj: n,
        escapes,
        frequency,
        wilson_ci: wilson_interval(escapes, n, 1.96),
        wilson_se,
        bound,
        initial_norm,
        b_star: consts.b_star,
        m_r: consts.m_r,
        kappa_tilde: consts.kappa_tilde,
        in_hypothesis: consts.in_hypothesis,
        dt: sim.dt,
        t_max: cfg.t_max,
        escape_ok: frequency <= bound + 3.0 * wilson_se,
        trajectories,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckpointStat {
    pub t: f64,
    pub mean: f64,
    pub standard_error: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Supermartingale {
    pub initial: f64,
    pub curve: Vec<CheckpointStat>,
    pub violations: usize,
}

/// Ensemble mean of `e^{κ̃(t∧τ)}‖ṽ(t∧τ)‖²` at the checkpoints, against
/// `‖ṽ(0)‖²` plus three standard errors.
pub fn supermartingale_diagnostic(stats: &SdeRunStats, kappa_tilde: f64) -> Supermartingale {
    let initial = stats.initial_norm * stats.initial_norm;
    let times: Vec<f64> = stats.trajectories.iter().map(|t| t.path.iter().map(|p| p.0)).fold(Vec::new(), |mut acc, ts| {
        for t in ts {
            if !acc.iter().any(|a: &f64| (a - t).abs() < 1e-9) {
                acc.push(t);
            }
        }
        acc
    });
    let mut times = times;
    times.sort_by(f64::total_cmp);
    let mut curve = Vec::with_capacity(times.len());
    for &t in &times {
        let vals: Vec<f64> = stats
            .trajectories
            .iter()
            .map(|tr| {
                // last record at or before t; the path is frozen after exit
                let p = tr.path.iter().take_while(|p| p.0 <= t + 1e-9).last().unwrap_or(&tr.path[0]);
                (kappa_tilde * p.0).exp() * p.1 * p.1
            })
            .collect();
        let n = vals.len().max(1) as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = if vals.len() > 1 { vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        let se = (var / n).sqrt();
        curve.push(CheckpointStat { t, mean, standard_error: se, ok: mean <= initial * (1.0 + 1e-9) + 3.0 * se });
    }
    let violations = curve.iter().filter(|c| !c.ok).count();
    Supermartingale { initial, curve, violations }
}

/// `scale · exp(-x²/2)` rescaled to the requested `𝔪`-norm.
pub fn even_bump(sol: &WaveSolution, target_norm: f64) -> Result<Vec<f64>> {
    let gain = sol.gain()?;
    let shape: Vec<f64> = sol.grid.x.iter().map(|x| (-0.5 * x * x).exp()).collect();
    let norm = (sol.grid.h * shape.iter().zip(&sol.u).map(|(s, &u)| gain.df(u) * s * s).sum::<f64>()).sqrt();
    Ok(shape.iter().map(|s| s * target_norm / norm).collect())
}
