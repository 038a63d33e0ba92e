//! The frozen-wave operator `L# v = -f v + c v_x + d v_xx + r·w*(q v)`, its
//! zero eigenfunctions and the densities built from them.
//!
//! Perturbations vanish outside the grid: difference stencils use zero ghost
//! values and the convolution gives every node the weight `h`. With uniform
//! weights the adjoint is the plain transpose.

use crate::discretize::{diff_matrices, Closure, ConvolutionOperator, Grid, SparseRows};
use crate::error::{Error, Result};
use crate::linalg::{factor_shifted, inverse_iteration};
use crate::model::{argmin, CoefficientFields};
use crate::wave::WaveSolution;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct FrozenOperator {
    pub n: usize,
    pub h: f64,
    pub c: f64,
    pub d: f64,
    pub f: Vec<f64>,
    pub r: Vec<f64>,
    pub q: Vec<f64>,
    /// `L# = A + P`.
    pub l: DMatrix<f64>,
    /// Nonlocal part `P_ij = r_i h w(x_i - x_j) q_j`.
    pub p: DMatrix<f64>,
    /// Local differential part `c D1 + d D2` (the `-f` term excluded).
    pub local: SparseRows,
}

impl FrozenOperator {
    pub fn assemble(coeffs: &CoefficientFields, c: f64, d: f64, conv: &ConvolutionOperator, grid: &Grid) -> Result<Self> {
        let n = grid.n;
        for v in [&coeffs.f, &coeffs.r, &coeffs.q] {
            if v.len() != n {
                return Err(Error::Shape { expected: n, got: v.len() });
            }
        }
        let (d1, d2) = diff_matrices(grid, Closure::ZeroGhost);
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let mut row: Vec<(usize, f64)> = d1.row(i).map(|(j, a)| (j, c * a)).collect();
            for (j, a) in d2.row(i) {
                match row.iter_mut().find(|(k, _)| *k == j) {
                    Some(e) => e.1 += d * a,
                    None => row.push((j, d * a)),
                }
            }
            row.sort_by_key(|e| e.0);
            rows.push(row);
        }
        let local = SparseRows::from_rows(rows);
        let w = conv.matrix_zero_extended();
        let p = DMatrix::from_fn(n, n, |i, j| coeffs.r[i] * w[(i, j)] * coeffs.q[j]);
        let mut l = p.clone();
        local.add_to(&mut l, 1.0);
        for i in 0..n {
            l[(i, i)] -= coeffs.f[i];
        }
        Ok(Self {
            n,
            h: grid.h,
            c,
            d,
            f: coeffs.f.clone(),
            r: coeffs.r.clone(),
            q: coeffs.q.clone(),
            l,
            p,
            local,
        })
    }

    pub fn from_wave(sol: &WaveSolution) -> Result<Self> {
        let coeffs = sol.coefficients()?;
        Self::assemble(&coeffs, sol.c, sol.system.diffusion, &sol.conv, &sol.grid)
    }

    /// `L#* = -f - c D1 + d D2 + q·w*(r ·)`.
    pub fn adjoint(&self) -> DMatrix<f64> {
        self.l.transpose()
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (&self.l * DVector::from_column_slice(v)).as_slice().to_vec()
    }

    pub fn apply_adjoint(&self, v: &[f64]) -> Vec<f64> {
        self.l.tr_mul(&DVector::from_column_slice(v)).as_slice().to_vec()
    }

    pub fn apply_p(&self, v: &[f64]) -> Vec<f64> {
        (&self.p * DVector::from_column_slice(v)).as_slice().to_vec()
    }

    pub fn apply_p_adjoint(&self, v: &[f64]) -> Vec<f64> {
        self.p.tr_mul(&DVector::from_column_slice(v)).as_slice().to_vec()
    }

    /// Discrete inner product `Σ h u v`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.h * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
    }

    /// `‖L#‖∞` (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        self.l.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }
}

/// Zero eigenfunctions of `L#` and `L#*`.
#[derive(Debug, Clone)]
pub struct NullVectors {
    /// Goldstone mode, normalized to `∫ û_x = a₂ - a₁`.
    pub ux: Vec<f64>,
    /// Adjoint eigenfunction with `⟨û_x, ψ⟩ = 1`.
    pub psi: Vec<f64>,
    pub ux_residual: f64,
    pub psi_residual: f64,
    pub iterations: (usize, usize),
}

pub const NULL_SHIFT: f64 = 1e-8;

/// Inverse iteration with shift `1e-8` on `L#` (started from `start`, usually
/// `D1 û`) and on `L#*` (started from the constant vector). Both share one
/// factorization.
pub fn null_vectors(op: &FrozenOperator, start: &[f64], mass: f64, tol: f64) -> Result<NullVectors> {
    let lu = factor_shifted(&op.l, NULL_SHIFT);
    let h = op.h;
    let norm_g = |v: &[f64]| h * v.iter().sum::<f64>() / mass;
    let (ux, ux_residual, it1) = inverse_iteration(&op.l, &lu, false, start, &norm_g, tol, 500)?;
    let ones = vec![1.0; op.n];
    let norm_psi = |v: &[f64]| h * v.iter().zip(&ux).map(|(a, b)| a * b).sum::<f64>();
    let (psi, psi_residual, it2) = inverse_iteration(&op.l, &lu, true, &ones, &norm_psi, tol, 500)?;
    for (what, v) in [("Goldstone mode", &ux), ("adjoint eigenfunction", &psi)] {
        let max = v.iter().cloned().fold(0.0, f64::max);
        let (node, min) = argmin(v);
        if min < -1e-10 * max {
            return Err(Error::Positivity { what, min, node });
        }
    }
    Ok(NullVectors { ux, psi, ux_residual, psi_residual, iterations: (it1, it2) })
}

/// Convenience wrapper returning only `ψ`.
pub fn adjoint_eigenfunction(op: &FrozenOperator, ux: &[f64]) -> Result<Vec<f64>> {
    let lu = factor_shifted(&op.l, NULL_SHIFT);
    let h = op.h;
    let norm_psi = |v: &[f64]| h * v.iter().zip(ux).map(|(a, b)| a * b).sum::<f64>();
    let (psi, _, _) = inverse_iteration(&op.l, &lu, true, &vec![1.0; op.n], &norm_psi, 1e-10, 500)?;
    let max = psi.iter().cloned().fold(0.0, f64::max);
    let (node, min) = argmin(&psi);
    if min < -1e-10 * max {
        return Err(Error::Positivity { what: "adjoint eigenfunction", min, node });
    }
    Ok(psi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralOptions {
    /// Fraction of the half-width excluded at each end of the trusted interior.
    pub buffer: f64,
    /// Nodes where `û_x` or `ψ` fall below this fraction of their maximum are
    /// not trusted.
    pub threshold: f64,
    /// Stopping tolerance for `‖L# v‖∞` in the inverse iterations.
    pub null_tol: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self { buffer: 0.1, threshold: 1e-12, null_tol: 1e-12 }
    }
}

/// Zero eigenfunctions, weights and measures on the grid.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub x: Vec<f64>,
    pub h: f64,
    pub ux: Vec<f64>,
    pub psi: Vec<f64>,
    /// `ψ/û_x` on the trusted interior, log-affine extrapolation outside.
    pub rho: Vec<f64>,
    pub log_rho_x: Vec<f64>,
    /// `ρ_xx/ρ`.
    pub rho_xx_over_rho: Vec<f64>,
    /// Slopes of `log ρ` fitted at the two ends of the trusted interior.
    pub rho_rates: (f64, f64),
    pub trusted: Vec<bool>,
    pub nu: Vec<f64>,
    pub mu: Vec<f64>,
    pub mu_star: Vec<f64>,
    /// `𝔪 = q/r`.
    pub m: Vec<f64>,
    pub pux: Vec<f64>,
    pub pstar_psi: Vec<f64>,
    pub z_mu: f64,
    /// `Z_μ` computed as `⟨û_x, P*ψ⟩`.
    pub z_mu_adjoint: f64,
    pub ux_residual: f64,
    pub psi_residual: f64,
    /// `‖L# D1 û‖∞` for the one-sided difference of the profile.
    pub d1_goldstone_residual: f64,
}

impl SpectralData {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// `Σ h a b`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.h * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }

    pub fn integral(&self, a: &[f64]) -> f64 {
        self.h * a.iter().sum::<f64>()
    }

    /// `∫ v dm` for a density `m`.
    pub fn expect(&self, m: &[f64], v: &[f64]) -> f64 {
        self.inner(m, v)
    }

    pub fn variance(&self, m: &[f64], v: &[f64]) -> f64 {
        let mean = self.expect(m, v);
        self.h * m.iter().zip(v).map(|(w, x)| w * (x - mean) * (x - mean)).sum::<f64>()
    }

    pub fn covariance(&self, m: &[f64], a: &[f64], b: &[f64]) -> f64 {
        let (ma, mb) = (self.expect(m, a), self.expect(m, b));
        self.h * m.iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * (x - ma) * (y - mb)).sum::<f64>()
    }

    /// `P₀ v (x) = Σ_j p₀(x, y_j) v_j` with `p₀(x_i, y_j) = P_ij û_x(y_j) / Pû_x(x_i)`.
    pub fn p0_apply(&self, op: &FrozenOperator, v: &[f64]) -> Vec<f64> {
        let gv: Vec<f64> = self.ux.iter().zip(v).map(|(g, x)| g * x).collect();
        op.apply_p(&gv).iter().zip(&self.pux).map(|(a, b)| a / b).collect()
    }

    /// Row-stochastic matrix of `P₀` (quadrature weights included).
    pub fn p0_matrix(&self, op: &FrozenOperator) -> DMatrix<f64> {
        DMatrix::from_fn(self.n(), self.n(), |i, j| op.p[(i, j)] * self.ux[j] / self.pux[i])
    }

    /// Indices of the trusted interior.
    pub fn trusted_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.trusted.iter().enumerate().filter(|(_, t)| **t).map(|(i, _)| i)
    }
}

/// Assembles `L#` for a wave and computes every density.
pub fn analyze(sol: &WaveSolution, opts: &SpectralOptions) -> Result<(FrozenOperator, SpectralData)> {
    let op = FrozenOperator::from_wave(sol)?;
    let coeffs = sol.coefficients()?;
    let mass = sol.fixed.a2 - sol.fixed.a1;
    let nv = null_vectors(&op, &sol.ux, mass, opts.null_tol)?;
    let data = build_densities(&op, &sol.grid, &nv, &coeffs, &sol.ux, opts)?;
    Ok((op, data))
}

pub fn build_densities(
    op: &FrozenOperator,
    grid: &Grid,
    nv: &NullVectors,
    coeffs: &CoefficientFields,
    d1_ux: &[f64],
    opts: &SpectralOptions,
) -> Result<SpectralData> {
    let n = op.n;
    let h = op.h;
    let (ux, psi) = (&nv.ux, &nv.psi);
    let gmax = ux.iter().cloned().fold(0.0, f64::max);
    let pmax = psi.iter().cloned().fold(0.0, f64::max);
    let limit = (1.0 - opts.buffer) * grid.half_width;
    let trusted: Vec<bool> = (0..n)
        .map(|i| grid.x[i].abs() <= limit && ux[i] > opts.threshold * gmax && psi[i] > opts.threshold * pmax)
        .collect();
    let idx: Vec<usize> = trusted.iter().enumerate().filter(|(_, t)| **t).map(|(i, _)| i).collect();
    if idx.len() < 16 {
        return Err(Error::Degenerate { what: "trusted interior size", value: idx.len() as f64 });
    }
    let (lo, hi) = (idx[0], idx[idx.len() - 1]);
    if idx.len() != hi - lo + 1 {
        return Err(Error::TailFit { side: "interior", detail: "trusted region is not contiguous".into() });
    }
    let mut log_rho: Vec<f64> = (0..n).map(|i| (psi[i] / ux[i]).ln()).collect();
    let k = ((hi - lo) / 20).max(3);
    let left = affine_fit(&grid.x[lo..lo + k], &log_rho[lo..lo + k]).ok_or_else(|| Error::TailFit {
        side: "left",
        detail: "non-finite log ρ".into(),
    })?;
    let right = affine_fit(&grid.x[hi + 1 - k..=hi], &log_rho[hi + 1 - k..=hi]).ok_or_else(|| Error::TailFit {
        side: "right",
        detail: "non-finite log ρ".into(),
    })?;
    for i in 0..lo {
        log_rho[i] = left.0 + left.1 * grid.x[i];
    }
    for i in hi + 1..n {
        log_rho[i] = right.0 + right.1 * grid.x[i];
    }
    let rho: Vec<f64> = log_rho.iter().map(|v| v.exp()).collect();
    let (d1, d2) = diff_matrices(grid, Closure::OneSided);
    let log_rho_x = d1.apply(&log_rho);
    let lrxx = d2.apply(&log_rho);
    let rho_xx_over_rho: Vec<f64> = lrxx.iter().zip(&log_rho_x).map(|(a, b)| a + b * b).collect();

    let nu: Vec<f64> = ux.iter().zip(psi).map(|(a, b)| a * b).collect();
    let pux = op.apply_p(ux);
    let pstar_psi = op.apply_p_adjoint(psi);
    let z_mu = h * pux.iter().zip(psi).map(|(a, b)| a * b).sum::<f64>();
    let z_mu_adjoint = h * ux.iter().zip(&pstar_psi).map(|(a, b)| a * b).sum::<f64>();
    if !((z_mu - z_mu_adjoint).abs() <= 1e-6 * z_mu.abs()) {
        return Err(Error::Normalization { what: "Z_mu", a: z_mu, b: z_mu_adjoint });
    }
    let mu: Vec<f64> = pux.iter().zip(psi).map(|(a, b)| a * b / z_mu).collect();
    let mu_star: Vec<f64> = ux.iter().zip(&pstar_psi).map(|(a, b)| a * b / z_mu).collect();
    let d1_res = op.apply(d1_ux).iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    Ok(SpectralData {
        x: grid.x.clone(),
        h,
        ux: ux.clone(),
        psi: psi.clone(),
        rho,
        log_rho_x,
        rho_xx_over_rho,
        rho_rates: (left.1, right.1),
        trusted,
        nu,
        mu,
        mu_star,
        m: coeffs.symmetrizer(),
        pux,
        pstar_psi,
        z_mu,
        z_mu_adjoint,
        ux_residual: nv.ux_residual,
        psi_residual: nv.psi_residual,
        d1_goldstone_residual: d1_res,
    })
}

/// Least-squares `(intercept, slope)`.
pub(crate) fn affine_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let fit = (my - slope * mx, slope);
    (fit.0.is_finite() && fit.1.is_finite()).then_some(fit)
}

/// Both sides of the quadratic-form identity for `v = h û_x` in `L²(ρ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyIdentity {
    /// `⟨L#(h û_x), h û_x⟩_ρ`.
    pub lhs: f64,
    /// Variance terms plus the discrete diffusion term.
    pub rhs: f64,
    /// `|lhs - rhs| / (1 + |lhs|)`.
    pub residual: f64,
    /// Same with the exact discrete transport remainder added to `rhs`.
    pub discrete_residual: f64,
    /// `(Z/2)Var_μ(P₀h) - (Z/2)Var_μ*(h)`, an upper bound for `lhs`.
    pub upper_bound: f64,
}

/// Evaluates
/// `⟨L#(hû_x), hû_x⟩_ρ = -(Z/2)Var_μ(h) - (Z/2)Var_μ*(h) - (Z/2)(∫h dμ - ∫h dμ*)² + Z Cov_μ(P₀h, h) - d∫h_x² dν`.
///
/// On the grid the local part `C = c D1 + d D2` contributes exactly
/// `-½ Σ_j h ψ_j Σ_k C_jk û_x(k) (h_j - h_k)²`; its diffusive half is the
/// discrete form of `-d∫h_x² dν` and its transport half is an `O(h²)`
/// remainder, reported separately in `discrete_residual`.
pub fn energy_identity_residual(
    op: &FrozenOperator,
    data: &SpectralData,
    test: &[f64],
    half_width: f64,
) -> Result<EnergyIdentity> {
    let n = data.n();
    if test.len() != n {
        return Err(Error::Shape { expected: n, got: test.len() });
    }
    let scale = test.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let outside = (0..n).filter(|&i| data.x[i].abs() > 0.5 * half_width).fold(0.0, |m: f64, i| m.max(test[i].abs()));
    if outside > 1e-10 * scale.max(1e-300) {
        return Err(Error::Support { value: outside });
    }
    energy_identity_terms(op, data, test, half_width)
}

/// [`energy_identity_residual`] without the support check.
pub fn energy_identity_terms(
    op: &FrozenOperator,
    data: &SpectralData,
    test: &[f64],
    half_width: f64,
) -> Result<EnergyIdentity> {
    let n = data.n();
    if test.len() != n {
        return Err(Error::Shape { expected: n, got: test.len() });
    }
    let v: Vec<f64> = test.iter().zip(&data.ux).map(|(a, b)| a * b).collect();
    let lv = op.apply(&v);
    let lhs = data.h * (0..n).map(|i| data.psi[i] * test[i] * lv[i]).sum::<f64>();
    let z = data.z_mu;
    let p0h = data.p0_apply(op, test);
    let gap_mean = data.expect(&data.mu, test) - data.expect(&data.mu_star, test);
    let var_mu = data.variance(&data.mu, test);
    let var_star = data.variance(&data.mu_star, test);
    let core = -0.5 * z * var_mu - 0.5 * z * var_star - 0.5 * z * gap_mean * gap_mean
        + z * data.covariance(&data.mu, &p0h, test);
    let (mut transport, mut diffusion) = (0.0, 0.0);
    let (d1, d2) = diff_matrices(&Grid::new(half_width, n)?, Closure::ZeroGhost);
    for j in 0..n {
        let mut tj = 0.0;
        for (k, a) in d1.row(j) {
            tj += a * data.ux[k] * (test[j] - test[k]).powi(2);
        }
        let mut dj = 0.0;
        for (k, a) in d2.row(j) {
            dj += a * data.ux[k] * (test[j] - test[k]).powi(2);
        }
        transport += data.psi[j] * tj;
        diffusion += data.psi[j] * dj;
    }
    transport *= -0.5 * data.h * op.c;
    diffusion *= -0.5 * data.h * op.d;
    let rhs = core + diffusion;
    let residual = (lhs - rhs).abs() / (1.0 + lhs.abs());
    let discrete_residual = (lhs - rhs - transport).abs() / (1.0 + lhs.abs());
    let upper_bound = 0.5 * z * data.variance(&data.mu, &p0h) - 0.5 * z * var_star;
    Ok(EnergyIdentity { lhs, rhs, residual, discrete_residual, upper_bound })
}

/// A smooth random test function: 16 sinusoids with frequencies in
/// `[0.2, 3]`, normal amplitudes, multiplied by the bump
/// `exp(-1/(1 - (x/R)²))` with `R = support`.
pub fn windowed_test_function<R: Rng>(x: &[f64], support: f64, rng: &mut R) -> Vec<f64> {
    let modes: Vec<(f64, f64, f64)> = (0..16)
        .map(|_| {
            let freq = rng.random_range(0.2..3.0);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let amp: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal) / 16.0;
            (freq, phase, amp)
        })
        .collect();
    x.iter()
        .map(|&xi| {
            let s = xi / support;
            if s.abs() >= 1.0 {
                return 0.0;
            }
            let window = (-1.0 / (1.0 - s * s)).exp();
            window * modes.iter().map(|(f, p, a)| a * (f * xi + p).sin()).sum::<f64>()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Kernel;
    use crate::wave::{neural_field, solve_wave, WaveOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(beta: f64, theta: f64, n: usize) -> (WaveSolution, FrozenOperator, SpectralData) {
        let sys = neural_field(beta, theta, 1.0).unwrap();
        let sol = solve_wave(&sys, &Grid::new(20.0, n).unwrap(), None, &WaveOptions::default()).unwrap();
        let (op, data) = analyze(&sol, &SpectralOptions::default()).unwrap();
        (sol, op, data)
    }

    #[test]
    fn constant_coefficients_give_shifted_convolution() {
        let grid = Grid::new(20.0, 64).unwrap();
        let conv = ConvolutionOperator::new(&Kernel::exponential(1.0).unwrap(), &grid);
        let coeffs = CoefficientFields::new(vec![1.0; 64], vec![1.0; 64], vec![1.0; 64]);
        let op = FrozenOperator::assemble(&coeffs, 0.0, 0.0, &conv, &grid).unwrap();
        let w = conv.matrix_zero_extended();
        for i in 0..64 {
            for j in 0..64 {
                let expect = w[(i, j)] - if i == j { 1.0 } else { 0.0 };
                assert_eq!(op.l[(i, j)], expect);
            }
        }
        let mid: f64 = w.row(32).iter().sum();
        assert!((mid - 1.0).abs() < 1e-6);
    }

    #[test]
    fn discrete_adjointness() {
        let (_, op, _) = setup(20.0, 0.4, 256);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u: Vec<f64> = (0..op.n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..op.n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lhs = op.inner(&op.apply(&u), &v);
        let rhs = op.inner(&u, &op.apply_adjoint(&v));
        let scale = op.inner(&u, &u).sqrt() * op.inner(&v, &v).sqrt();
        assert!((lhs - rhs).abs() < 1e-8 * scale);
        assert!(op.p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn zero_speed_psi_is_symmetrized_goldstone_mode() {
        let (_, _, data) = setup(8.0, 0.5, 512);
        // ρ Z = 𝔪 with Z = 1/∫𝔪 û_x²
        let z = 1.0 / data.h / data.m.iter().zip(&data.ux).map(|(m, g)| m * g * g).sum::<f64>();
        for i in data.trusted_indices() {
            let expect = data.m[i] * data.ux[i] * z;
            assert!((data.psi[i] - expect).abs() <= 1e-6 * expect, "{i}");
        }
    }

    #[test]
    fn densities_are_normalized_and_push_forward_holds() {
        let (_, op, data) = setup(20.0, 0.4, 512);
        assert!((data.integral(&data.nu) - 1.0).abs() < 1e-10);
        assert!((data.integral(&data.mu) - 1.0).abs() < 1e-10);
        assert!((data.integral(&data.mu_star) - 1.0).abs() < 1e-10);
        let p0 = data.p0_matrix(&op);
        for i in 0..data.n() {
            assert!((p0.row(i).sum() - 1.0).abs() < 1e-8);
        }
        let pushed = p0.tr_mul(&DVector::from_column_slice(&data.mu));
        let tv: f64 = pushed.iter().zip(&data.mu_star).map(|(a, b)| (a - b).abs()).sum::<f64>() * data.h;
        assert!(tv < 1e-8, "{tv}");
        let l1: f64 = data.mu.iter().zip(&data.mu_star).map(|(a, b)| (a - b).abs()).sum::<f64>() * data.h;
        assert!(l1 > 1e-3);
    }

    #[test]
    fn energy_identity_for_constants_and_random_tests() {
        let (sol, op, data) = setup(20.0, 0.4, 512);
        let e = energy_identity_terms(&op, &data, &vec![1.0; data.n()], 20.0).unwrap();
        assert!(e.lhs.abs() < 1e-10 && e.rhs.abs() < 1e-12, "{e:?}");
        let window: Vec<f64> = data.x.iter().map(|&x| {
            let s = x / 10.0;
            if s.abs() < 1.0 { (-1.0 / (1.0 - s * s)).exp() } else { 0.0 }
        }).collect();
        let tanh: Vec<f64> = data.x.iter().zip(&window).map(|(x, w)| x.tanh() * w).collect();
        let e = energy_identity_residual(&op, &data, &tanh, sol.grid.half_width).unwrap();
        assert!(e.discrete_residual < 1e-10, "{e:?}");
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let h = windowed_test_function(&data.x, 10.0, &mut rng);
            let e = energy_identity_residual(&op, &data, &h, 20.0).unwrap();
            assert!(e.discrete_residual < 1e-10, "{e:?}");
            assert!(e.lhs <= e.upper_bound + 1e-8 + (e.lhs - e.rhs).abs());
        }
    }

    #[test]
    fn support_violation_is_reported() {
        let (_, op, data) = setup(8.0, 0.5, 256);
        let ones = vec![1.0; data.n()];
        assert!(matches!(energy_identity_residual(&op, &data, &ones, 20.0), Err(Error::Support { .. })));
    }
}
