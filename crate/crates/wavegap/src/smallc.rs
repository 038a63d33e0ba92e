//! Spectral gap in `L²(𝔪)` for small speeds: the auxiliary operator
//! `L⁰ v = -f v + P(û_x/φ⁰ · v)` with `φ⁰ = Pû_x/f`, the perturbation bound
//! `κ(c)` and the critical speed `c*`.

use crate::discretize::{diff_matrices, Closure, Grid};
use crate::error::{Error, Result};
use crate::gap::{poincare_direct, theoretical_kappa};
use crate::linalg::symmetric_top_eigenvalue;
use crate::model::Kernel;
use crate::spectral::{FrozenOperator, SpectralData};
use nalgebra::DMatrix;
use serde::Serialize;

/// Auxiliary objects of `L⁰`.
#[derive(Debug, Clone)]
pub struct Auxiliary {
    pub phi0: Vec<f64>,
    pub psi0: Vec<f64>,
    pub mu0: Vec<f64>,
    /// `Z⁰ = ∫ 𝔪 û_x φ⁰`.
    pub z0: f64,
    /// Poincaré constant of `μ⁰`.
    pub poincare0: f64,
    /// Gap constant of `L⁰` in `L²(ρ⁰)`: `(inf f/2)(1 - γ)` with `γ` from
    /// `poincare0` and the kernel bound `M`.
    pub kappa0: f64,
    /// `û_xx` as the zero-ghost difference of `û_x`, so that
    /// `φ⁰ = û_x - c û_xx/f` holds exactly.
    pub uxx: Vec<f64>,
    /// `max(‖P⁰φ⁰ - fφ⁰‖∞, ‖P⁰*ψ⁰ - fψ⁰‖∞)`.
    pub eigen_residual: f64,
}

/// Builds `φ⁰`, `ψ⁰`, `μ⁰` and the constants of `L⁰`. `m_bound` is the
/// contractivity constant `M` of the kernel.
pub fn build_auxiliary(op: &FrozenOperator, data: &SpectralData, grid: &Grid, m_bound: f64) -> Result<Auxiliary> {
    if op.d != 0.0 {
        return Err(Error::Precondition(format!("small-speed theory needs d = 0, got {}", op.d)));
    }
    let fmin = op.f.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(fmin > 0.0) {
        return Err(Error::Precondition(format!("inf f = {fmin} is not positive")));
    }
    let n = op.n;
    let g = &data.ux;
    let phi0: Vec<f64> = data.pux.iter().zip(&op.f).map(|(p, f)| p / f).collect();
    let z0 = data.inner(&data.m.iter().zip(g).map(|(m, g)| m * g).collect::<Vec<_>>(), &phi0);
    let psi0: Vec<f64> = (0..n).map(|i| data.m[i] * g[i] / z0).collect();
    let raw: Vec<f64> = (0..n).map(|i| data.m[i] * data.pux[i] * g[i]).collect();
    let z_mu0 = data.integral(&raw);
    let mu0: Vec<f64> = raw.iter().map(|v| v / z_mu0).collect();

    // P⁰ = P diag(û_x/φ⁰)
    let scale: Vec<f64> = (0..n).map(|i| g[i] / phi0[i]).collect();
    let p0phi = op.apply_p(&(0..n).map(|i| scale[i] * phi0[i]).collect::<Vec<_>>());
    let p0s_psi: Vec<f64> = op.apply_p_adjoint(&psi0).iter().zip(&scale).map(|(a, s)| a * s).collect();
    let phi_max = phi0.iter().cloned().fold(0.0, f64::max);
    let psi_max = psi0.iter().cloned().fold(0.0, f64::max);
    let mut eigen_residual = 0.0f64;
    for i in 0..n {
        eigen_residual = eigen_residual
            .max((p0phi[i] - op.f[i] * phi0[i]).abs() / phi_max)
            .max((p0s_psi[i] - op.f[i] * psi0[i]).abs() / psi_max);
    }

    let idx: Vec<usize> = data.trusted_indices().collect();
    let poincare0 = poincare_direct(&mu0[idx[0]..=idx[idx.len() - 1]], data.h)?;
    let kappa0 = theoretical_kappa(fmin, poincare0, m_bound);

    let (d1z, _) = diff_matrices(grid, Closure::ZeroGhost);
    let uxx = d1z.apply(g);
    Ok(Auxiliary { phi0, psi0, mu0, z0, poincare0, kappa0, uxx, eigen_residual })
}

/// `κ(c) = κ₀(1 - A c²) - B|c|`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KappaOfC {
    pub kappa0: f64,
    /// `2‖û_xx/f‖²_𝔪 / Z⁰`.
    pub a: f64,
    /// `‖û_xx/(û_x f) (κ₀ - f)‖∞` on the trusted interior.
    pub b: f64,
}

impl KappaOfC {
    pub fn new(kappa0: f64, a: f64, b: f64) -> Self {
        Self { kappa0, a, b }
    }

    pub fn from_auxiliary(aux: &Auxiliary, op: &FrozenOperator, data: &SpectralData) -> Self {
        let n = op.n;
        let uxx_f: Vec<f64> = (0..n).map(|i| aux.uxx[i] / op.f[i]).collect();
        let norm2 = data.h * (0..n).map(|i| data.m[i] * uxx_f[i] * uxx_f[i]).sum::<f64>();
        let b = data
            .trusted_indices()
            .map(|i| (uxx_f[i] / data.ux[i] * (aux.kappa0 - op.f[i])).abs())
            .fold(0.0, f64::max);
        Self { kappa0: aux.kappa0, a: 2.0 * norm2 / aux.z0, b }
    }

    pub fn eval(&self, c: f64) -> f64 {
        self.kappa0 * (1.0 - self.a * c * c) - self.b * c.abs()
    }

    /// `c* = min{|c| : κ(c) ≤ 0}` by bisection; `+∞` when the correction
    /// terms vanish.
    pub fn c_star(&self) -> f64 {
        if self.kappa0 <= 0.0 {
            return 0.0;
        }
        let hi = if self.a > 0.0 {
            (1.0 / self.a).sqrt()
        } else if self.b > 0.0 {
            self.kappa0 / self.b
        } else {
            return f64::INFINITY;
        };
        let (mut lo, mut hi) = (0.0, hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if self.eval(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

/// `κ₀(1 - 2c²M²/(1-|c|M)) - |c|M|κ₀-1|`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NfeCondition {
    pub holds: bool,
    pub margin: f64,
}

pub fn nfe_condition(kappa0: f64, m: f64, c: f64) -> Result<NfeCondition> {
    let cm = c.abs() * m;
    if cm >= 1.0 {
        return Err(Error::Domain(format!("|c|M = {cm} ≥ 1")));
    }
    let margin = kappa0 * (1.0 - 2.0 * cm * cm / (1.0 - cm)) - cm * (kappa0 - 1.0).abs();
    Ok(NfeCondition { holds: margin > 0.0, margin })
}

/// `‖w_x/w‖∞` over the lattice lags of the grid.
pub fn kernel_log_derivative_sup(kernel: &Kernel, grid: &Grid) -> Result<f64> {
    let mut sup = 0.0f64;
    for k in 0..grid.n {
        let x = k as f64 * grid.h;
        for s in [x, -x] {
            if let Some(v) = kernel.log_derivative(s) {
                sup = sup.max(v.abs());
            }
        }
    }
    if let Kernel::Exponential { scale } = kernel {
        sup = sup.max(1.0 / scale);
    }
    if !sup.is_finite() {
        return Err(Error::Unbounded { what: "‖w_x/w‖∞", detail: format!("{sup}") });
    }
    Ok(sup)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MGap {
    /// Top eigenvalue of `L` (no transport) in `L²(𝔪)` on `{⟨v, û_x⟩_𝔪 = 0}`.
    pub lambda: f64,
    pub tol: f64,
}

/// Dense eigensolve of the `𝔪`-symmetric operator `L v = -f v + P v`.
pub fn m_gap(op: &FrozenOperator, data: &SpectralData) -> Result<MGap> {
    let n = op.n;
    let h = op.h;
    let sm: Vec<f64> = data.m.iter().map(|v| v.sqrt()).collect();
    let mut s = DMatrix::from_fn(n, n, |i, j| 0.5 * (op.p[(i, j)] * sm[i] / sm[j] + op.p[(j, i)] * sm[j] / sm[i]));
    for i in 0..n {
        s[(i, i)] -= op.f[i];
    }
    let norm_l = s.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut e: Vec<f64> = (0..n).map(|i| (h * data.m[i]).sqrt() * data.ux[i]).collect();
    let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::Degenerate { what: "û_x in 𝔪-coordinates", value: norm });
    }
    e.iter_mut().for_each(|v| *v /= norm);
    let se: Vec<f64> = (0..n).map(|i| (0..n).map(|j| s[(i, j)] * e[j]).sum()).collect();
    let ese: f64 = e.iter().zip(&se).map(|(a, b)| a * b).sum();
    let shift = 1e3 * (1.0 + norm_l);
    let proj = DMatrix::from_fn(n, n, |i, j| s[(i, j)] - e[i] * se[j] - se[i] * e[j] + e[i] * e[j] * (ese - shift));
    Ok(MGap { lambda: symmetric_top_eigenvalue(proj), tol: 10.0 * h * h * norm_l })
}

#[derive(Debug, Clone, Serialize)]
pub struct SmallCCertificate {
    pub c_solver: f64,
    pub z0: f64,
    pub poincare0: f64,
    pub kappa0: f64,
    pub kappa: KappaOfC,
    pub kappa_of_c: f64,
    pub c_star: f64,
    pub eigen_residual: f64,
    /// `‖û_xx‖²_𝔪/Z⁰` against `M²/(1-|c|M)` (neural field only).
    pub uxx_ratio: Option<(f64, f64)>,
    pub kernel_bound: f64,
    pub nfe_condition: Option<NfeCondition>,
    pub m_gap: MGap,
    /// `Z = 2κ₀/Z⁰`.
    pub z: f64,
    /// `|c| < c*` strictly; the endpoint gives an empty gap.
    pub holds: bool,
}

pub fn certify_small_c(
    op: &FrozenOperator,
    data: &SpectralData,
    grid: &Grid,
    kernel: &Kernel,
    m_bound: f64,
    neural_field: bool,
) -> Result<SmallCCertificate> {
    let aux = build_auxiliary(op, data, grid, m_bound)?;
    let kappa = KappaOfC::from_auxiliary(&aux, op, data);
    let c = op.c;
    let kb = kernel_log_derivative_sup(kernel, grid)?;
    let (uxx_ratio, nfe) = if neural_field {
        let lhs = 0.5 * kappa.a;
        let cm = c.abs() * kb;
        let rhs = if cm < 1.0 { kb * kb / (1.0 - cm) } else { f64::INFINITY };
        (Some((lhs, rhs)), nfe_condition(aux.kappa0, kb, c).ok())
    } else {
        (None, None)
    };
    let c_star = kappa.c_star();
    Ok(SmallCCertificate {
        c_solver: c,
        z0: aux.z0,
        poincare0: aux.poincare0,
        kappa0: aux.kappa0,
        kappa,
        kappa_of_c: kappa.eval(c),
        c_star,
        eigen_residual: aux.eigen_residual,
        uxx_ratio,
        kernel_bound: kb,
        nfe_condition: nfe,
        m_gap: m_gap(op, data)?,
        z: 2.0 * aux.kappa0 / aux.z0,
        holds: c.abs() < c_star,
    })
}
