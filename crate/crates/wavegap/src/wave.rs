//! Traveling-wave profiles `(û, c)` of `-c û_x = d û_xx + S(û, w * g(û))`,
//! the speed formula for the neural field, speed bounds, and the standing
//! wave associated with a moving front.

use crate::discretize::{diff_matrices, Closure, ConvolutionOperator, Grid, SparseRows};
use crate::error::{Error, Result};
use crate::linalg::MonotoneCubic;
use crate::model::{argmin, BistableSystem, CoefficientFields, FixedPoints, Gain, Kernel, Nonlinearity};
use crate::quad;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaveOptions {
    /// Newton stops when the ∞-norm of the residual drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Grids finer than twice this size are initialized from a solve on
    /// `coarse_nodes` nodes.
    pub coarse_nodes: usize,
    /// Bracket for the fixed-point search.
    pub root_bracket: (f64, f64),
}

impl Default for WaveOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 50, coarse_nodes: 512, root_bracket: (-10.0, 10.0) }
    }
}

#[derive(Debug, Clone)]
pub struct WaveSolution {
    pub system: BistableSystem,
    pub grid: Grid,
    pub conv: ConvolutionOperator,
    pub u: Vec<f64>,
    pub c: f64,
    /// One-sided second-order `D1 û`.
    pub ux: Vec<f64>,
    pub uxx: Vec<f64>,
    pub fixed: FixedPoints,
    pub residual: f64,
    pub iterations: usize,
}

impl WaveSolution {
    /// `w * g(û)` with constant extension.
    pub fn conv_g(&self) -> Vec<f64> {
        let nl = &self.system.nonlinearity;
        let gu: Vec<f64> = self.u.iter().map(|&u| nl.g(u)).collect();
        self.conv
            .convolve(&gu, nl.g(self.fixed.a1), nl.g(self.fixed.a2))
            .expect("profile has grid length")
    }

    pub fn coefficients(&self) -> Result<CoefficientFields> {
        self.system.coefficient_fields(&self.u, &self.conv_g())
    }

    pub fn gain(&self) -> Result<&Gain> {
        self.system
            .nonlinearity
            .gain()
            .ok_or_else(|| Error::Precondition("operation needs the neural-field preset".into()))
    }
}

struct Discretization<'a> {
    sys: &'a BistableSystem,
    conv: ConvolutionOperator,
    d1: SparseRows,
    d2: SparseRows,
    fixed: FixedPoints,
    n: usize,
}

impl Discretization<'_> {
    fn phase(&self, u: &[f64]) -> f64 {
        let n = self.n;
        if n % 2 == 1 {
            u[(n - 1) / 2] - self.fixed.a
        } else {
            0.5 * (u[n / 2 - 1] + u[n / 2]) - self.fixed.a
        }
    }

    /// With diffusion the profile equation is second order and both ends are
    /// pinned to the stable states. Without it the tail closure of the
    /// convolution already determines the boundary rows, and pinning would
    /// force a spurious layer at the outflow end.
    fn pinned(&self) -> bool {
        self.sys.diffusion > 0.0
    }

    fn conv_g(&self, u: &[f64]) -> Vec<f64> {
        let nl = &self.sys.nonlinearity;
        let gu: Vec<f64> = u.iter().map(|&v| nl.g(v)).collect();
        self.conv.convolve(&gu, nl.g(self.fixed.a1), nl.g(self.fixed.a2)).expect("grid length")
    }

    fn residual(&self, u: &[f64], c: f64) -> Vec<f64> {
        let n = self.n;
        let z = self.conv_g(u);
        let du = self.d1.apply(u);
        let ddu = self.d2.apply(u);
        let d = self.sys.diffusion;
        let mut r: Vec<f64> = (0..n).map(|i| c * du[i] + d * ddu[i] + self.sys.nonlinearity.s(u[i], z[i])).collect();
        if self.pinned() {
            r[0] = u[0] - self.fixed.a1;
            r[n - 1] = u[n - 1] - self.fixed.a2;
        }
        r.push(self.phase(u));
        r
    }

    fn jacobian(&self, u: &[f64], c: f64) -> DMatrix<f64> {
        let n = self.n;
        let nl = &self.sys.nonlinearity;
        let z = self.conv_g(u);
        let mut j = DMatrix::zeros(n + 1, n + 1);
        let w = self.conv.matrix_trapezoid();
        let dg: Vec<f64> = u.iter().map(|&v| nl.dg(v)).collect();
        let rows = if self.pinned() { 1..n - 1 } else { 0..n };
        for i in rows.clone() {
            let r = nl.ds_dg(u[i], z[i]);
            for k in 0..n {
                j[(i, k)] = r * w[(i, k)] * dg[k];
            }
            j[(i, i)] += nl.ds_dx(u[i], z[i]);
            for (k, a) in self.d1.row(i) {
                j[(i, k)] += c * a;
            }
            for (k, a) in self.d2.row(i) {
                j[(i, k)] += self.sys.diffusion * a;
            }
        }
        let du = self.d1.apply(u);
        for i in rows {
            j[(i, n)] = du[i];
        }
        if self.pinned() {
            j[(0, 0)] = 1.0;
            j[(n - 1, n - 1)] = 1.0;
        }
        if n % 2 == 1 {
            j[(n, (n - 1) / 2)] = 1.0;
        } else {
            j[(n, n / 2 - 1)] = 0.5;
            j[(n, n / 2)] = 0.5;
        }
        j
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Newton iteration on `(û, c)` with the phase fixed by `û(0) = a`. The
/// Jacobian is reused while the residual contracts by at least a factor 10.
pub fn solve_wave(
    system: &BistableSystem,
    grid: &Grid,
    init: Option<(&[f64], f64)>,
    opts: &WaveOptions,
) -> Result<WaveSolution> {
    let fixed = system.find_fixed_points(opts.root_bracket.0, opts.root_bracket.1)?;
    let n = grid.n;
    let (mut u, mut c) = match init {
        Some((u0, c0)) => {
            if u0.len() != n {
                return Err(Error::Shape { expected: n, got: u0.len() });
            }
            (u0.to_vec(), c0)
        }
        None if n > 2 * opts.coarse_nodes => {
            let coarse = Grid::new(grid.half_width, opts.coarse_nodes)?;
            let sol = solve_wave(system, &coarse, None, opts)?;
            let p = MonotoneCubic::uniform(coarse.x[0], coarse.h, &sol.u);
            (grid.x.iter().map(|&x| p.eval(x)).collect(), sol.c)
        }
        None => {
            let ell = system.kernel.length_scale();
            let u = grid.x.iter().map(|&x| fixed.a1 + (fixed.a2 - fixed.a1) / (1.0 + (-x / ell).exp())).collect();
            (u, 0.0)
        }
    };
    let (d1, d2) = diff_matrices(grid, Closure::OneSided);
    let disc = Discretization { sys: system, conv: ConvolutionOperator::new(&system.kernel, grid), d1, d2, fixed, n };

    let mut res = disc.residual(&u, c);
    let mut nr = sup_norm(&res);
    let mut lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> = None;
    let mut fresh = false;
    let mut iterations = 0;
    while nr >= opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::NewtonDivergence { iterations, residual: nr });
        }
        iterations += 1;
        if lu.is_none() {
            lu = Some(disc.jacobian(&u, c).lu());
            fresh = true;
        }
        let rhs = -DVector::from_column_slice(&res);
        let dx = lu.as_ref().unwrap().solve(&rhs).ok_or(Error::NewtonDivergence { iterations, residual: nr })?;
        let mut lam = 1.0;
        let (un, cn, rn, nrn) = loop {
            let un: Vec<f64> = u.iter().zip(dx.iter()).map(|(a, b)| a + lam * b).collect();
            let cn = c + lam * dx[n];
            let rn = disc.residual(&un, cn);
            let nrn = sup_norm(&rn);
            if nrn < (1.0 - 1e-4 * lam) * nr || lam < 1e-3 {
                break (un, cn, rn, nrn);
            }
            lam *= 0.5;
        };
        if !(nrn < nr) {
            if fresh {
                return Err(Error::NewtonDivergence { iterations, residual: nr });
            }
            // stale Jacobian: refactor and retry from the same point
            lu = None;
            continue;
        }
        if nrn > 0.1 * nr {
            lu = None;
        }
        fresh = false;
        u = un;
        c = cn;
        res = rn;
        nr = nrn;
    }

    let ux = disc.d1.apply(&u);
    let uxx = disc.d2.apply(&u);
    let (node, min_slope) = argmin(&ux);
    if !(min_slope > 0.0) {
        return Err(Error::Monotonicity { what: "wave profile", min_slope, node });
    }
    Ok(WaveSolution {
        system: system.clone(),
        grid: grid.clone(),
        conv: disc.conv,
        u,
        c,
        ux,
        uxx,
        fixed,
        residual: nr,
        iterations,
    })
}

/// Front position versus time from direct integration of the evolution
/// equation.
#[derive(Debug, Clone, Serialize)]
pub struct SpeedMeasurement {
    pub c: f64,
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    pub dt: f64,
}

/// Integrates `u_t = d u_xx + S(u, w * g(u))` from a step at the origin with
/// classical RK4 and fits the slope of the level-`a` crossing over the
/// second half of `[0, t_end]`.
pub fn measure_speed_by_evolution(system: &BistableSystem, grid: &Grid, t_end: f64) -> Result<SpeedMeasurement> {
    let fixed = system.find_fixed_points(-10.0, 10.0)?;
    let n = grid.n;
    let conv = ConvolutionOperator::new(&system.kernel, grid);
    let (_, d2) = diff_matrices(grid, Closure::OneSided);
    let nl = &system.nonlinearity;
    let d = system.diffusion;
    let (gl, gr) = (nl.g(fixed.a1), nl.g(fixed.a2));
    let rhs = |u: &[f64]| -> Vec<f64> {
        let gu: Vec<f64> = u.iter().map(|&v| nl.g(v)).collect();
        let z = conv.convolve(&gu, gl, gr).expect("grid length");
        let mut out: Vec<f64> = (0..n).map(|i| nl.s(u[i], z[i])).collect();
        if d > 0.0 {
            let ddu = d2.apply(u);
            for i in 1..n - 1 {
                out[i] += d * ddu[i];
            }
            out[0] = 0.0;
            out[n - 1] = 0.0;
        }
        out
    };
    let dt = 0.25 * f64::min(1.0, grid.h * grid.h / (2.0 * d + 1e-300));
    let steps = (t_end / dt).ceil() as usize;
    let dt = t_end / steps as f64;
    let mut u: Vec<f64> = grid.x.iter().map(|&x| if x < 0.0 { fixed.a1 } else { fixed.a2 }).collect();
    let crossing = |u: &[f64]| -> Option<f64> {
        (0..n - 1)
            .find(|&i| u[i] < fixed.a && u[i + 1] >= fixed.a)
            .map(|i| grid.x[i] + grid.h * (fixed.a - u[i]) / (u[i + 1] - u[i]))
    };
    let limit = 0.5 * grid.half_width;
    let mut times = vec![0.0];
    let mut positions = vec![crossing(&u).unwrap_or(0.0)];
    let axpy = |u: &[f64], k: &[f64], s: f64| -> Vec<f64> { u.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    for step in 1..=steps {
        let k1 = rhs(&u);
        let k2 = rhs(&axpy(&u, &k1, 0.5 * dt));
        let k3 = rhs(&axpy(&u, &k2, 0.5 * dt));
        let k4 = rhs(&axpy(&u, &k3, dt));
        for i in 0..n {
            u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t = step as f64 * dt;
        if let Some(b) = u.iter().find(|v| !v.is_finite()) {
            return Err(Error::Blowup { t, norm: *b });
        }
        let pos = crossing(&u).ok_or(Error::FrontLost { t, position: f64::NAN })?;
        if pos.abs() > limit {
            return Err(Error::FrontLost { t, position: pos });
        }
        times.push(t);
        positions.push(pos);
    }
    let pts: Vec<(f64, f64)> =
        times.iter().zip(&positions).filter(|(t, _)| **t >= 0.5 * t_end).map(|(t, p)| (*t, *p)).collect();
    let m = pts.len() as f64;
    let (st, sp) = pts.iter().fold((0.0, 0.0), |(a, b), (t, p)| (a + t, b + p));
    let (mt, mp) = (st / m, sp / m);
    let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), (t, p)| (a + (t - mt) * (p - mp), b + (t - mt) * (t - mt)));
    if den == 0.0 {
        return Err(Error::Division { what: "front-position regression", value: den });
    }
    // u(x, t) = û(x - ct): the crossing moves with velocity c
    Ok(SpeedMeasurement { c: num / den, times, positions, dt })
}

/// `∫_{a₁}^{a₂} (x - F(x)) dx`.
pub fn speed_numerator(gain: &Gain, fixed: &FixedPoints) -> f64 {
    quad::adaptive_simpson(&|x| x - gain.f(x), fixed.a1, fixed.a2, 1e-15)
}

/// `c = ∫(x - F(x))dx / ∫ û_x² F'(û) dx` for the neural field.
pub fn wave_speed_formula(sol: &WaveSolution) -> Result<f64> {
    let gain = sol.gain()?;
    let num = speed_numerator(gain, &sol.fixed);
    let integrand: Vec<f64> = sol.u.iter().zip(&sol.ux).map(|(&u, &ux)| ux * ux * gain.df(u)).collect();
    let den = sol.grid.integrate(&integrand);
    if den.abs() < 1e-14 {
        return Err(Error::Division { what: "wave-speed formula", value: den });
    }
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedBounds {
    pub lower: f64,
    pub upper: f64,
    pub numerator: f64,
    /// Zero numerator: the speed vanishes and the bounds carry no information.
    pub degenerate: bool,
    /// Negative numerator: bounds obtained for the reflected gain
    /// `a₁ + a₂ - F(a₁ + a₂ - x)`, whose wave travels with speed `-c`.
    pub reflected: bool,
}

/// Two-sided bounds on the neural-field wave speed for an exponential kernel
/// with scale `σ` and a convex-concave gain.
pub fn speed_bounds(gain: &Gain, kernel: &Kernel, fixed: &FixedPoints) -> Result<SpeedBounds> {
    let Kernel::Exponential { scale: sigma } = *kernel else {
        return Err(Error::Precondition("speed bounds hold for the two-sided exponential kernel only".into()));
    };
    let changes = gain.curvature_sign_changes(fixed.a1 - 1.0, fixed.a2 + 1.0, 4096);
    if changes > 1 {
        return Err(Error::ConvexConcave { changes });
    }
    let FixedPoints { a1, a, a2 } = *fixed;
    let num = speed_numerator(gain, fixed);
    if num.abs() <= 1e-12 * (a2 - a1).powi(2) {
        return Ok(SpeedBounds { lower: 0.0, upper: 0.0, numerator: num, degenerate: true, reflected: false });
    }
    // ∫_{a₁}^{a} (x - F) and ∫_{a}^{a₂} (F - x), both positive
    let below = quad::adaptive_simpson(&|x| x - gain.f(x), a1, a, 1e-15);
    let above = quad::adaptive_simpson(&|x| gain.f(x) - x, a, a2, 1e-15);
    let bounds = |num: f64, below: f64, above: f64| {
        let lower = sigma / (2f64.sqrt() * (a2 - a1)) * num / below.sqrt();
        let upper = 0.25 * sigma * num / above;
        (lower, upper)
    };
    if num > 0.0 {
        let (lower, upper) = bounds(num, below, above);
        Ok(SpeedBounds { lower, upper, numerator: num, degenerate: false, reflected: false })
    } else {
        // for the reflected gain the two partial integrals swap roles
        let (lower, upper) = bounds(-num, above, below);
        Ok(SpeedBounds { lower: -upper, upper: -lower, numerator: num, degenerate: false, reflected: true })
    }
}

/// The standing wave `û⁰ = w * F(û) = û - c û_x` and its gain `F⁰`.
#[derive(Debug, Clone)]
pub struct StandingWave {
    pub u0: Vec<f64>,
    /// `w * (F'(û) û_x)`.
    pub u0x: Vec<f64>,
    /// `F⁰` as a monotone interpolant with knots `û⁰(x_i)` and values `F(û(x_i))`.
    pub gain0: MonotoneCubic,
    /// `max_i |û⁰ - w * F⁰(û⁰)|`.
    pub residual: f64,
    profile: MonotoneCubic,
    c: f64,
}

impl StandingWave {
    pub fn gain0(&self, x: f64) -> f64 {
        self.gain0.eval(x)
    }

    /// `∫₀^∞ e^{-s} û⁰(x + cs) ds`, which recovers `û(x)`.
    pub fn reconstruct(&self, x: f64) -> f64 {
        exponential_average(&self.profile, self.c, x)
    }
}

/// `∫₀^∞ e^{-s} p(x + cs) ds` for an interpolated profile `p` (truncated at
/// `s = 40`).
pub fn exponential_average(p: &MonotoneCubic, c: f64, x: f64) -> f64 {
    const S: f64 = 40.0;
    quad::gauss_legendre(&|s| (-s).exp() * p.eval(x + c * s), 0.0, S, 400)
}

pub fn standing_wave_family(sol: &WaveSolution) -> Result<StandingWave> {
    let gain = sol.gain()?;
    let FixedPoints { a1, a2, .. } = sol.fixed;
    let fu: Vec<f64> = sol.u.iter().map(|&u| gain.f(u)).collect();
    let u0 = sol.conv.convolve(&fu, gain.f(a1), gain.f(a2))?;
    if let Some(k) = u0.windows(2).position(|p| !(p[1] > p[0])) {
        return Err(Error::Monotonicity { what: "standing wave", min_slope: (u0[k + 1] - u0[k]) / sol.grid.h, node: k });
    }
    let gain0 = MonotoneCubic::new(&u0, &fu)?;
    let f0: Vec<f64> = u0.iter().map(|&x| gain0.eval(x)).collect();
    let back = sol.conv.convolve(&f0, gain.f(a1), gain.f(a2))?;
    let residual = back.iter().zip(&u0).fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()));
    let slope: Vec<f64> = sol.u.iter().zip(&sol.ux).map(|(&u, &ux)| gain.df(u) * ux).collect();
    let u0x = sol.conv.convolve(&slope, 0.0, 0.0)?;
    let profile = MonotoneCubic::uniform(sol.grid.x[0], sol.grid.h, &u0);
    Ok(StandingWave { u0, u0x, gain0, residual, profile, c: sol.c })
}

/// Convenience constructor for the neural-field preset with an exponential
/// kernel.
pub fn neural_field(beta: f64, theta: f64, sigma: f64) -> Result<BistableSystem> {
    Ok(BistableSystem::neural_field(Kernel::exponential(sigma)?, Gain::sigmoid(beta, theta)?))
}

impl Nonlinearity {
    pub fn is_neural_field(&self) -> bool {
        matches!(self, Nonlinearity::NeuralField { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(beta: f64, theta: f64, n: usize) -> WaveSolution {
        let sys = neural_field(beta, theta, 1.0).unwrap();
        solve_wave(&sys, &Grid::new(20.0, n).unwrap(), None, &WaveOptions::default()).unwrap()
    }

    #[test]
    fn symmetric_gain_gives_standing_front() {
        let sol = solve(8.0, 0.5, 512);
        assert!(sol.c.abs() < 1e-8, "c = {}", sol.c);
        assert!(sol.residual < 1e-10);
        assert!(sol.ux.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn resolve_from_own_output_is_a_fixed_point() {
        let sol = solve(20.0, 0.4, 512);
        let again = solve_wave(&sol.system, &sol.grid, Some((&sol.u, sol.c)), &WaveOptions::default()).unwrap();
        assert_eq!(again.iterations, 0);
        assert!((again.c - sol.c).abs() < 1e-12);
    }

    #[test]
    fn shifted_initial_guess_reaches_same_profile() {
        let sol = solve(20.0, 0.4, 512);
        let shifted: Vec<f64> = sol.grid.x.iter().map(|&x| {
            let p = MonotoneCubic::uniform(sol.grid.x[0], sol.grid.h, &sol.u);
            p.eval(x - 1.5)
        }).collect();
        let again = solve_wave(&sol.system, &sol.grid, Some((&shifted, 0.0)), &WaveOptions::default()).unwrap();
        let diff = again.u.iter().zip(&sol.u).fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()));
        assert!(diff < 1e-8, "{diff}");
    }

    #[test]
    fn formula_sign_follows_numerator() {
        let sol = solve(20.0, 0.4, 1024);
        let cf = wave_speed_formula(&sol).unwrap();
        let num = speed_numerator(sol.gain().unwrap(), &sol.fixed);
        assert_eq!(cf.signum(), num.signum());
        assert_eq!(sol.c.signum(), num.signum());
    }

    #[test]
    fn bounds_scale_linearly_with_sigma() {
        let gain = Gain::sigmoid(20.0, 0.4).unwrap();
        let fp = neural_field(20.0, 0.4, 1.0).unwrap().find_fixed_points(-10.0, 10.0).unwrap();
        let b1 = speed_bounds(&gain, &Kernel::exponential(1.0).unwrap(), &fp).unwrap();
        let b2 = speed_bounds(&gain, &Kernel::exponential(2.0).unwrap(), &fp).unwrap();
        assert_eq!(b2.lower, 2.0 * b1.lower);
        assert_eq!(b2.upper, 2.0 * b1.upper);
        assert!(b1.reflected && b1.lower <= b1.upper);
    }

    #[test]
    fn symmetric_gain_gives_degenerate_bounds() {
        let gain = Gain::sigmoid(10.0, 0.5).unwrap();
        let fp = neural_field(10.0, 0.5, 1.0).unwrap().find_fixed_points(-10.0, 10.0).unwrap();
        let b = speed_bounds(&gain, &Kernel::exponential(1.0).unwrap(), &fp).unwrap();
        assert!(b.degenerate);
        assert_eq!((b.lower, b.upper), (0.0, 0.0));
    }

    #[test]
    fn bounds_refuse_other_kernels() {
        let gain = Gain::sigmoid(20.0, 0.4).unwrap();
        let fp = FixedPoints { a1: 0.0, a: 0.4, a2: 1.0 };
        assert!(matches!(speed_bounds(&gain, &Kernel::gaussian(1.0).unwrap(), &fp), Err(Error::Precondition(_))));
    }

    #[test]
    fn standing_wave_at_zero_speed_is_the_wave() {
        let sol = solve(8.0, 0.5, 512);
        let sw = standing_wave_family(&sol).unwrap();
        let gain = sol.gain().unwrap();
        for i in 0..sol.grid.n {
            assert!((sw.u0[i] - sol.u[i]).abs() < 1e-8);
            assert!((sw.gain0(sw.u0[i]) - gain.f(sol.u[i])).abs() < 1e-8);
        }
    }

    #[test]
    fn reconstruction_error_is_second_order() {
        let err = |n: usize| {
            let sol = solve(20.0, 0.4, n);
            let sw = standing_wave_family(&sol).unwrap();
            assert!(sw.residual < 1e-6, "{}", sw.residual);
            (0..sol.grid.n)
                .filter(|&i| sol.grid.x[i].abs() < 10.0)
                .map(|i| (sw.reconstruct(sol.grid.x[i]) - sol.u[i]).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(513) / err(1025);
        assert!((3.5..4.5).contains(&ratio), "{ratio}");
    }
}
