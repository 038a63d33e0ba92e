//! Spectral-gap constants and a direct check of the gap.
//!
//! Every sup/inf constant is evaluated on the trusted interior of
//! [`SpectralData`]; outside it the densities are continued by their fitted
//! exponential tails.

use crate::discretize::{diff_matrices, Closure, Grid};
use crate::error::{Error, Result};
use crate::linalg::{symmetric_top_eigenvalue, tridiagonal_eigenvalue};
use crate::model::Kernel;
use crate::spectral::{affine_fit, windowed_test_function, FrozenOperator, SpectralData};
use crate::wave::WaveSolution;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// `M = max_i Σ_j (w_x/w)²(x_i - x_j) p₀(x_i, x_j)` over the trusted interior.
pub fn contractivity_m(op: &FrozenOperator, data: &SpectralData, kernel: &Kernel) -> Result<f64> {
    let n = op.n;
    let h = op.h;
    // squared log-derivative by lag, offset n-1; None outside the support
    let ld2: Vec<Option<f64>> =
        (0..2 * n - 1).map(|k| kernel.log_derivative_sq((k as f64 - (n - 1) as f64) * h)).collect();
    let mut m = 0.0f64;
    for i in data.trusted_indices() {
        let mut s = 0.0;
        for j in 0..n {
            if let Some(v) = ld2[i + n - 1 - j] {
                s += v * op.p[(i, j)] * data.ux[j];
            }
        }
        m = m.max(s / data.pux[i]);
    }
    if !m.is_finite() {
        return Err(Error::Unbounded { what: "kernel bound M", detail: format!("row value {m}") });
    }
    Ok(m)
}

/// Exponential fit of one tail of a density: `log μ ≈ intercept - rate·|x|`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TailRate {
    pub rate: f64,
    pub intercept: f64,
}

/// Fits `log μ` on the outermost tenth of the nodes of one side.
fn fit_tail(x: &[f64], mu: &[f64], right: bool) -> Result<TailRate> {
    let side = if right { "right" } else { "left" };
    let n = x.len();
    let k = (n / 10).max(3);
    let range = if right { n - k..n } else { 0..k };
    let xs: Vec<f64> = x[range.clone()].iter().map(|v| v.abs()).collect();
    let ys: Vec<f64> = mu[range].iter().map(|v| v.ln()).collect();
    let (b, a) = affine_fit(&xs, &ys).ok_or_else(|| Error::TailFit { side, detail: "non-finite log μ".into() })?;
    if a >= 0.0 {
        return Err(Error::TailFit { side, detail: format!("log μ does not decay (slope {a:e})") });
    }
    let drop = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let dev = xs.iter().zip(&ys).map(|(x, y)| (y - b - a * x).abs()).fold(0.0, f64::max);
    if dev > 0.1 * drop.max(1e-12) {
        return Err(Error::TailFit { side, detail: format!("deviation {dev:e} from affine over a drop of {drop:e}") });
    }
    Ok(TailRate { rate: -a, intercept: b })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Muckenhoupt {
    pub b1: f64,
    pub b2: f64,
    pub right: TailRate,
    pub left: TailRate,
}

impl Muckenhoupt {
    /// `[B₁∧B₂, 4(B₁∨B₂)]`.
    pub fn bracket(&self) -> (f64, f64) {
        (self.b1.min(self.b2), 4.0 * self.b1.max(self.b2))
    }
}

/// `B₁ = sup_{r>0} ∫_r^∞ μ ∫_0^r 1/μ` and its mirror `B₂`, for a density
/// sampled on the uniform nodes `x` with spacing `h`. Beyond the last node
/// `μ` is continued by its fitted exponential tail, which closes both the
/// tail mass and the supremum over `r` outside the grid.
pub fn muckenhoupt(x: &[f64], mu: &[f64], h: f64) -> Result<Muckenhoupt> {
    if x.len() != mu.len() {
        return Err(Error::Shape { expected: x.len(), got: mu.len() });
    }
    if let Some(i) = mu.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Positivity { what: "μ", min: mu[i], node: i });
    }
    if !(x[0] < 0.0 && x[x.len() - 1] > 0.0) {
        return Err(Error::Precondition("density nodes must straddle the origin".into()));
    }
    let right = fit_tail(x, mu, true)?;
    let left = fit_tail(x, mu, false)?;
    let b1 = half_line(x, mu, h, right.rate);
    let xr: Vec<f64> = x.iter().rev().map(|v| -v).collect();
    let mr: Vec<f64> = mu.iter().rev().cloned().collect();
    let b2 = half_line(&xr, &mr, h, left.rate);
    Ok(Muckenhoupt { b1, b2, right, left })
}

/// The supremum for `r > 0` on increasing nodes `x`.
fn half_line(x: &[f64], mu: &[f64], h: f64, rate: f64) -> f64 {
    let n = x.len();
    let i0 = (0..n).min_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs())).unwrap();
    // ∫_r^∞ μ at every node from i0 on, by trapezoid plus the fitted tail
    let mut tail = vec![0.0; n];
    tail[n - 1] = mu[n - 1] / rate;
    for i in (i0..n - 1).rev() {
        tail[i] = tail[i + 1] + 0.5 * h * (mu[i] + mu[i + 1]);
    }
    let mut inv = x[i0] / mu[i0];
    let mut best = 0.0f64;
    for i in i0 + 1..n {
        inv += 0.5 * h * (1.0 / mu[i - 1] + 1.0 / mu[i]);
        if x[i] > 0.0 {
            best = best.max(tail[i] * inv);
        }
    }
    // beyond the grid the product tends monotonically to 1/rate²
    best.max(1.0 / (rate * rate))
}

/// `κ₀ = 1/λ₁` for the weighted Neumann problem `-(μ h_x)_x = λ μ h` on the
/// uniform nodes, by Sturm bisection of the symmetrized tridiagonal matrix.
pub fn poincare_direct(mu: &[f64], h: f64) -> Result<f64> {
    let n = mu.len();
    if n < 3 {
        return Err(Error::Degenerate { what: "density length", value: n as f64 });
    }
    if let Some(i) = mu.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Positivity { what: "μ", min: mu[i], node: i });
    }
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n - 1];
    for i in 0..n - 1 {
        let k = 0.5 * (mu[i] + mu[i + 1]) / h;
        diag[i] += k;
        diag[i + 1] += k;
        off[i] = -k / (h * (mu[i] * mu[i + 1]).sqrt());
    }
    for i in 0..n {
        diag[i] /= h * mu[i];
    }
    let lambda1 = tridiagonal_eigenvalue(&diag, &off, 1);
    if lambda1 < 1e-12 {
        return Err(Error::Degenerate { what: "first nonzero Neumann eigenvalue", value: lambda1 });
    }
    Ok(1.0 / lambda1)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Equivalence {
    pub delta1: f64,
    pub delta2: f64,
    pub delta1_star: f64,
    pub delta2_star: f64,
}

/// Ranges of `Pû_x/û_x` and `P*ψ/ψ` on the trusted interior.
pub fn equivalence_constants(data: &SpectralData) -> Result<Equivalence> {
    let range = |num: &[f64], den: &[f64]| {
        data.trusted_indices()
            .map(|i| num[i] / den[i])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (delta1, delta2) = range(&data.pux, &data.ux);
    let (delta1_star, delta2_star) = range(&data.pstar_psi, &data.psi);
    for (what, v) in [("δ₁", delta1), ("δ*₁", delta1_star)] {
        if !(v > 0.0) {
            return Err(Error::NonPositive { what, value: v });
        }
    }
    Ok(Equivalence { delta1, delta2, delta1_star, delta2_star })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KRho {
    pub value: f64,
    /// Position of the maximizing node.
    pub at: f64,
    /// The maximum sits on the edge of the trusted interior.
    pub on_boundary: bool,
}

/// `K_ρ = max (w*ρ)/ρ` over the trusted interior. The convolution runs over
/// the lattice extended beyond the grid, with `ρ` continued log-affinely.
pub fn k_rho(data: &SpectralData, kernel: &Kernel) -> Result<KRho> {
    let n = data.n();
    let h = data.h;
    let (eta_l, eta_r) = data.rho_rates;
    if let Kernel::Exponential { scale } = kernel {
        let worst = eta_l.abs().max(eta_r.abs()) * scale;
        if worst >= 1.0 {
            return Err(Error::Unbounded {
                what: "K_ρ",
                detail: format!("ρ grows at rate {worst} per kernel length"),
            });
        }
    }
    let mass = kernel.lattice_mass(h);
    let reach = match kernel.support_radius() {
        Some(r) => (r / h).ceil() as usize + 1,
        None => (60.0 * kernel.length_scale() / h).ceil() as usize + 1,
    };
    let log_rho: Vec<f64> = data.rho.iter().map(|v| v.ln()).collect();
    let log_rho_at = |j: isize| -> f64 {
        if j < 0 {
            log_rho[0] + eta_l * (j as f64) * h
        } else if j as usize >= n {
            log_rho[n - 1] + eta_r * ((j as usize - (n - 1)) as f64) * h
        } else {
            log_rho[j as usize]
        }
    };
    let weights: Vec<f64> = (0..=2 * reach).map(|k| h * kernel.value((k as f64 - reach as f64) * h) / mass).collect();
    let idx: Vec<usize> = data.trusted_indices().collect();
    let (lo, hi) = (idx[0], idx[idx.len() - 1]);
    let mut best = KRho { value: 0.0, at: 0.0, on_boundary: false };
    for &i in &idx {
        let mut s = 0.0;
        let mut edge = 0.0;
        for (k, w) in weights.iter().enumerate() {
            let j = i as isize + k as isize - reach as isize;
            let term = w * (log_rho_at(j) - log_rho[i]).exp();
            s += term;
            if k == 0 || k == 2 * reach {
                edge += term;
            }
        }
        if !(s.is_finite() && edge <= 1e-10 * s) {
            return Err(Error::Unbounded { what: "K_ρ", detail: format!("lattice sum not converged at x = {}", data.x[i]) });
        }
        if s > best.value {
            best = KRho { value: s, at: data.x[i], on_boundary: i == lo || i == hi };
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecayChecks {
    /// `μ(x+y) ≤ k e^{-αy} μ(x)` for `x, y ≥ 0`.
    pub alpha: f64,
    pub k: f64,
    /// `μ(-x-y) ≤ l e^{-βy} μ(-x)`.
    pub beta: f64,
    pub l: f64,
    pub uxxx_over_ux: f64,
    pub uxx_over_ux: f64,
    pub psixx_over_psi: f64,
    pub psix_over_psi: f64,
}

/// Exponential decay of `μ` and the derivative ratios of `û_x` and `ψ`.
pub fn decay_and_derivative_checks(data: &SpectralData, grid: &Grid) -> Result<DecayChecks> {
    let idx: Vec<usize> = data.trusted_indices().collect();
    let (lo, hi) = (idx[0], idx[idx.len() - 1]);
    let x = &data.x[lo..=hi];
    let mu = &data.mu[lo..=hi];
    let right = fit_tail(x, mu, true)?;
    let left = fit_tail(x, mu, false)?;
    let alpha = right.rate;
    let beta = left.rate;
    let k = decay_prefactor(x.iter().zip(mu).filter(|(x, _)| **x >= 0.0).map(|(x, m)| (*x, *m)), alpha);
    let l = decay_prefactor(x.iter().zip(mu).rev().filter(|(x, _)| **x <= 0.0).map(|(x, m)| (-x, *m)), beta);

    let (d1, d2) = diff_matrices(grid, Closure::OneSided);
    let uxx = d1.apply(&data.ux);
    let uxxx = d2.apply(&data.ux);
    let psix = d1.apply(&data.psi);
    let psixx = d2.apply(&data.psi);
    let sup = |num: &[f64], den: &[f64]| idx.iter().map(|&i| (num[i] / den[i]).abs()).fold(0.0, f64::max);
    Ok(DecayChecks {
        alpha,
        k,
        beta,
        l,
        uxxx_over_ux: sup(&uxxx, &data.ux),
        uxx_over_ux: sup(&uxx, &data.ux),
        psixx_over_psi: sup(&psixx, &data.psi),
        psix_over_psi: sup(&psix, &data.psi),
    })
}

/// Smallest `k` with `μ(s') e^{α s'} ≤ k μ(s) e^{α s}` for all `s ≤ s'`,
/// given `(s, μ)` with increasing `s ≥ 0`.
fn decay_prefactor(pts: impl Iterator<Item = (f64, f64)>, alpha: f64) -> f64 {
    let mut min_g = f64::INFINITY;
    let mut k = 1.0f64;
    for (s, m) in pts {
        let g = m.ln() + alpha * s;
        min_g = min_g.min(g);
        k = k.max((g - min_g).exp());
    }
    k
}

/// `γ = κ₀M/(1+κ₀M)`.
pub fn gamma(kappa0: f64, m: f64) -> f64 {
    kappa0 * m / (1.0 + kappa0 * m)
}

/// `κ = δ*₁/2 (1 - γ)`.
pub fn theoretical_kappa(delta1_star: f64, kappa0: f64, m: f64) -> f64 {
    0.5 * delta1_star * (1.0 - gamma(kappa0, m))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DirectGap {
    /// Top eigenvalue of the projected `ρ`-symmetric part.
    pub lambda: f64,
    /// `10 h² ‖L#‖∞`.
    pub tol: f64,
}

impl DirectGap {
    pub fn holds(&self, kappa: f64) -> bool {
        self.lambda <= -kappa + self.tol
    }

    pub fn certify(&self, kappa: f64) -> Result<()> {
        if self.holds(kappa) {
            Ok(())
        } else {
            Err(Error::CertificationFailure {
                detail: format!("λ_gap = {} > -κ + tol = {}", self.lambda, -kappa + self.tol),
            })
        }
    }
}

/// Symmetric part of `L#` in `L²(ρ)`, written in the coordinates
/// `y = √(hρ) v`. The local terms use the continuum identities
/// `⟨c v_x, v⟩_ρ = -(c/2)∫ρ_x v²` and
/// `⟨d v_xx, v⟩_ρ = -d∫ρ v_x² + (d/2)∫ρ_xx v²`.
pub fn rho_symmetric_part(op: &FrozenOperator, data: &SpectralData) -> DMatrix<f64> {
    let n = op.n;
    let h = op.h;
    let sr: Vec<f64> = data.rho.iter().map(|r| r.sqrt()).collect();
    let mut s = DMatrix::from_fn(n, n, |i, j| {
        0.5 * (op.p[(i, j)] * sr[i] / sr[j] + op.p[(j, i)] * sr[j] / sr[i])
    });
    for i in 0..n {
        s[(i, i)] += -op.f[i] - 0.5 * op.c * data.log_rho_x[i] + 0.5 * op.d * data.rho_xx_over_rho[i];
    }
    if op.d != 0.0 {
        // edges between neighbours and to the zero ghosts, ρ at midpoints
        let scale = op.d / (h * h);
        for i in 0..n {
            let left = if i == 0 { data.rho[0] } else { 0.5 * (data.rho[i - 1] + data.rho[i]) };
            let right = if i == n - 1 { data.rho[n - 1] } else { 0.5 * (data.rho[i] + data.rho[i + 1]) };
            s[(i, i)] -= scale * (left + right) / data.rho[i];
            if i + 1 < n {
                let v = scale * right / (sr[i] * sr[i + 1]);
                s[(i, i + 1)] += v;
                s[(i + 1, i)] += v;
            }
        }
    }
    s
}

/// Largest eigenvalue of the `ρ`-symmetric part of `L#` on `{⟨v, ψ⟩ = 0}`.
pub fn direct_gap(op: &FrozenOperator, data: &SpectralData) -> Result<DirectGap> {
    let n = op.n;
    let h = op.h;
    let s = rho_symmetric_part(op, data);
    // ⟨v, ψ⟩ = Σ y_i √(h/ρ_i) ψ_i
    let mut e: Vec<f64> = (0..n).map(|i| (h / data.rho[i]).sqrt() * data.psi[i]).collect();
    let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::Degenerate { what: "ψ in ρ-coordinates", value: norm });
    }
    e.iter_mut().for_each(|v| *v /= norm);
    // (I - eeᵀ) S (I - eeᵀ) with e pushed far down the spectrum
    let se: Vec<f64> = (0..n).map(|i| (0..n).map(|j| s[(i, j)] * e[j]).sum()).collect();
    let ese: f64 = e.iter().zip(&se).map(|(a, b)| a * b).sum();
    let shift = 1e3 * (1.0 + op.norm_inf());
    let proj = DMatrix::from_fn(n, n, |i, j| {
        s[(i, j)] - e[i] * se[j] - se[i] * e[j] + e[i] * e[j] * (ese - shift)
    });
    let lambda = symmetric_top_eigenvalue(proj);
    Ok(DirectGap { lambda, tol: 10.0 * h * h * op.norm_inf() })
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractivitySample {
    pub worst_ratio: f64,
    pub gamma: f64,
    pub evaluated: usize,
    pub skipped: usize,
    pub violations: usize,
}

/// `Var_μ(P₀h) / Var_μ*(h)`, or `None` when `h` is constant under `μ*`.
pub fn variance_ratio(op: &FrozenOperator, data: &SpectralData, test: &[f64]) -> Option<f64> {
    let var_star = data.variance(&data.mu_star, test);
    let second = data.expect(&data.mu_star, &test.iter().map(|v| v * v).collect::<Vec<_>>());
    if !(var_star > 1e-14 * second) {
        return None;
    }
    let p0h = data.p0_apply(op, test);
    Some(data.variance(&data.mu, &p0h) / var_star)
}

/// Random windowed test functions (stream `k` of `seed` for sample `k`)
/// plus a steep `tanh` step, checked against `Var_μ(P₀h) ≤ γ Var_μ*(h)`.
pub fn contractivity_sample(
    op: &FrozenOperator,
    data: &SpectralData,
    gamma: f64,
    n_samples: usize,
    support: f64,
    seed: u64,
) -> ContractivitySample {
    let ratios: Vec<Option<f64>> = (0..=n_samples)
        .into_par_iter()
        .map(|k| {
            let test = if k == n_samples {
                data.x.iter().map(|x| (x / (0.02 * support)).tanh()).collect()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64);
                windowed_test_function(&data.x, support, &mut rng)
            };
            variance_ratio(op, data, &test)
        })
        .collect();
    let mut out = ContractivitySample { worst_ratio: 0.0, gamma, evaluated: 0, skipped: 0, violations: 0 };
    for r in ratios {
        match r {
            Some(v) => {
                out.evaluated += 1;
                out.worst_ratio = out.worst_ratio.max(v);
                if v > gamma + 1e-8 {
                    out.violations += 1;
                }
            }
            None => out.skipped += 1,
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct GapOptions {
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for GapOptions {
    fn default() -> Self {
        Self { n_samples: 1000, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapCertificate {
    pub c: f64,
    pub m: f64,
    pub b1: f64,
    pub b2: f64,
    pub kappa0_bracket: (f64, f64),
    pub kappa0_direct: f64,
    pub equivalence: Equivalence,
    pub k_rho: Option<KRho>,
    pub decay: Option<DecayChecks>,
    pub gamma: f64,
    pub kappa: f64,
    /// `κ` with `κ₀ = 4(B₁∨B₂)`.
    pub kappa_conservative: f64,
    pub lambda_gap: f64,
    pub gap_tol: f64,
    pub contractivity: ContractivitySample,
    pub hypotheses: Vec<HypothesisCheck>,
    pub certified: bool,
}

/// Every constant for one wave, the sampled contraction check and the
/// direct eigenvalue check. Numerical failures of individual hypotheses are
/// recorded, not propagated.
pub fn certify(sol: &WaveSolution, op: &FrozenOperator, data: &SpectralData, opts: &GapOptions) -> Result<GapCertificate> {
    let kernel = &sol.system.kernel;
    let mut hyps = Vec::new();
    let mut check = |name: &'static str, passed: bool, detail: String| hyps.push(HypothesisCheck { name, passed, detail });

    let coeffs = sol.coefficients()?;
    let (rmin, qmin) = (coeffs.r_bounds.0, coeffs.q_bounds.0);
    check("r, q positive", rmin > 0.0 && qmin > 0.0, format!("inf r = {rmin:e}, inf q = {qmin:e}"));
    check("w positive near 0", kernel.value(0.0) > 0.0, format!("w(0) = {:e}", kernel.value(0.0)));

    let idx: Vec<usize> = data.trusted_indices().collect();
    let (lo, hi) = (idx[0], idx[idx.len() - 1]);
    let x = &data.x[lo..=hi];
    let mu = &data.mu[lo..=hi];

    let m = contractivity_m(op, data, kernel)?;
    let eq = equivalence_constants(data)?;
    check("δ's positive", eq.delta1 > 0.0 && eq.delta1_star > 0.0, format!("δ₁ = {}, δ*₁ = {}", eq.delta1, eq.delta1_star));

    let kr = k_rho(data, kernel);
    check("K_ρ finite", kr.is_ok(), kr.as_ref().map(|k| format!("{}", k.value)).unwrap_or_else(|e| e.to_string()));
    let decay = decay_and_derivative_checks(data, &sol.grid);
    check(
        "exponential decay of μ",
        decay.is_ok(),
        decay.as_ref().map(|d| format!("α = {}, β = {}", d.alpha, d.beta)).unwrap_or_else(|e| e.to_string()),
    );
    let mk = muckenhoupt(x, mu, data.h)?;
    let kappa0 = poincare_direct(mu, data.h)?;
    let bracket = mk.bracket();
    check(
        "κ₀ within the Muckenhoupt bracket",
        bracket.0 <= kappa0 && kappa0 <= bracket.1,
        format!("{} in [{}, {}]", kappa0, bracket.0, bracket.1),
    );

    let g = gamma(kappa0, m);
    let kappa = theoretical_kappa(eq.delta1_star, kappa0, m);
    let kappa_conservative = theoretical_kappa(eq.delta1_star, bracket.1, m);
    check("κ positive", kappa > 0.0, format!("κ = {kappa}"));

    let support = 0.5 * sol.grid.half_width;
    let contractivity = contractivity_sample(op, data, g, opts.n_samples, support, opts.seed);
    check(
        "contraction of P₀",
        contractivity.violations == 0,
        format!("worst ratio {} vs γ = {}", contractivity.worst_ratio, g),
    );

    let gap = direct_gap(op, data)?;
    let all_hyps = hyps.iter().all(|h| h.passed);
    Ok(GapCertificate {
        c: sol.c,
        m,
        b1: mk.b1,
        b2: mk.b2,
        kappa0_bracket: bracket,
        kappa0_direct: kappa0,
        equivalence: eq,
        k_rho: kr.ok(),
        decay: decay.ok(),
        gamma: g,
        kappa,
        kappa_conservative,
        lambda_gap: gap.lambda,
        gap_tol: gap.tol,
        contractivity,
        certified: all_hyps && gap.holds(kappa),
        hypotheses: hyps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{analyze, SpectralOptions};
    use crate::wave::{neural_field, solve_wave, WaveOptions};

    fn grid_nodes(l: f64, n: usize) -> (Vec<f64>, f64) {
        let g = Grid::new(l, n).unwrap();
        (g.x.clone(), g.h)
    }

    fn laplace(x: &[f64], alpha: f64) -> Vec<f64> {
        x.iter().map(|x| 0.5 * alpha * (-alpha * x.abs()).exp()).collect()
    }

    #[test]
    fn muckenhoupt_two_sided_exponential() {
        let (x, h) = grid_nodes(20.0, 2049);
        for alpha in [1.0, 2.0] {
            let b = muckenhoupt(&x, &laplace(&x, alpha), h).unwrap();
            let exact = 1.0 / (alpha * alpha);
            assert!((b.b1 - exact).abs() < 0.01 * exact, "{b:?}");
            assert!((b.b2 - exact).abs() < 0.01 * exact, "{b:?}");
            assert!((b.right.rate - alpha).abs() < 0.01 * alpha);
            let k0 = poincare_direct(&laplace(&x, alpha), h).unwrap();
            let (lo, hi) = b.bracket();
            assert!(lo <= k0 && k0 <= hi, "{k0} not in [{lo}, {hi}]");
        }
    }

    #[test]
    fn muckenhoupt_gaussian_is_refinement_stable() {
        let vals: Vec<(f64, f64)> = [1025, 2049]
            .iter()
            .map(|&n| {
                let (x, h) = grid_nodes(6.0, n);
                let mu: Vec<f64> = x.iter().map(|x| (-x * x / 2.0).exp()).collect();
                let b = muckenhoupt(&x, &mu, h).unwrap();
                (b.b1, b.b2)
            })
            .collect();
        assert!(vals[0].0.is_finite() && (vals[0].0 - vals[1].0).abs() < 0.01 * vals[1].0);
        assert!((vals[0].1 - vals[1].1).abs() < 0.01 * vals[1].1);
    }

    #[test]
    fn growing_tail_is_rejected() {
        let (x, h) = grid_nodes(5.0, 201);
        let mu: Vec<f64> = x.iter().map(|x| (0.1 * x).exp()).collect();
        assert!(matches!(muckenhoupt(&x, &mu, h), Err(Error::TailFit { .. })));
    }

    #[test]
    fn neumann_gap_of_uniform_density() {
        let l = 5.0;
        let (_, h) = grid_nodes(l, 1001);
        let k0 = poincare_direct(&vec![1.0 / (2.0 * l); 1001], h).unwrap();
        let exact = (2.0 * l / std::f64::consts::PI).powi(2);
        assert!((k0 - exact).abs() < 0.01 * exact, "{k0} vs {exact}");
    }

    #[test]
    fn poincare_refinement() {
        let k: Vec<f64> = [1025, 2049]
            .iter()
            .map(|&n| {
                let (x, h) = grid_nodes(20.0, n);
                poincare_direct(&laplace(&x, 1.0), h).unwrap()
            })
            .collect();
        assert!((k[0] - k[1]).abs() < 0.005 * k[1]);
    }

    #[test]
    fn kappa_formula() {
        assert_eq!(theoretical_kappa(1.0, 1.0, 1.0), 0.25);
        assert!((theoretical_kappa(0.8, 2.0, 1e-12) - 0.4).abs() < 1e-10);
        assert!(theoretical_kappa(1.0, 4.0, 1.0) <= theoretical_kappa(1.0, 2.0, 1.0));
        assert!(gamma(2.0, 1.0) > gamma(1.0, 1.0) && gamma(1.0, 2.0) > gamma(1.0, 1.0));
    }

    #[test]
    fn decay_prefactor_of_pure_exponential_is_one() {
        let pts = (0..100).map(|i| (i as f64 * 0.1, (-0.7 * i as f64 * 0.1).exp()));
        assert!((decay_prefactor(pts, 0.7) - 1.0).abs() < 1e-12);
    }

    fn setup(beta: f64, theta: f64, n: usize, sigma: f64) -> (WaveSolution, FrozenOperator, SpectralData) {
        let sys = neural_field(beta, theta, sigma).unwrap();
        let sol = solve_wave(&sys, &Grid::new(20.0, n).unwrap(), None, &WaveOptions::default()).unwrap();
        let (op, data) = analyze(&sol, &SpectralOptions::default()).unwrap();
        (sol, op, data)
    }

    #[test]
    fn exponential_kernel_bound() {
        for sigma in [1.0, 2.0] {
            let (sol, op, data) = setup(20.0, 0.4, 512, sigma);
            let m = contractivity_m(&op, &data, &sol.system.kernel).unwrap();
            assert!((m - 1.0 / (sigma * sigma)).abs() < 1e-8, "{m}");
        }
    }

    #[test]
    fn symmetric_wave_constants() {
        let (sol, op, data) = setup(8.0, 0.5, 512, 1.0);
        let eq = equivalence_constants(&data).unwrap();
        assert!((eq.delta1_star - 1.0).abs() < 1e-6 && (eq.delta2_star - 1.0).abs() < 1e-6, "{eq:?}");
        assert!(eq.delta1 <= data.z_mu && data.z_mu <= eq.delta2);
        let kr = k_rho(&data, &sol.system.kernel).unwrap();
        let tr: Vec<f64> = data.trusted_indices().map(|i| data.m[i]).collect();
        let bound = tr.iter().cloned().fold(0.0, f64::max) / tr.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(kr.value <= bound + 1e-6);
        let gap = direct_gap(&op, &data).unwrap();
        assert!(gap.lambda < 0.0, "{gap:?}");
    }

    #[test]
    fn k_rho_matches_laplace_transform() {
        let (sol, _, mut data) = setup(8.0, 0.5, 512, 1.0);
        let eta = 0.3;
        data.rho = data.x.iter().map(|x| (eta * x).exp()).collect();
        data.rho_rates = (eta, eta);
        let kr = k_rho(&data, &sol.system.kernel).unwrap();
        let exact = 1.0 / (1.0 - eta * eta);
        assert!((kr.value - exact).abs() < 1e-3 * exact, "{} vs {exact}", kr.value);
        data.rho = vec![1.0; data.n()];
        data.rho_rates = (0.0, 0.0);
        assert!((k_rho(&data, &sol.system.kernel).unwrap().value - 1.0).abs() < 1e-12);
        data.rho_rates = (0.0, 1.5);
        assert!(matches!(k_rho(&data, &sol.system.kernel), Err(Error::Unbounded { .. })));
    }

    #[test]
    fn derivative_bound_for_exponential_kernel() {
        let (sol, _, data) = setup(20.0, 0.4, 1024, 1.0);
        let dc = decay_and_derivative_checks(&data, &sol.grid).unwrap();
        assert!(dc.uxx_over_ux <= 1.0 + 1e-3, "{dc:?}");
        assert!(dc.alpha > 0.0 && dc.beta > 0.0 && dc.k >= 1.0 && dc.l >= 1.0);
    }

    #[test]
    fn asymmetric_certificate() {
        let (sol, op, data) = setup(20.0, 0.4, 512, 1.0);
        let cert = certify(&sol, &op, &data, &GapOptions { n_samples: 100, seed: 1 }).unwrap();
        assert!(cert.contractivity.violations == 0, "{:?}", cert.contractivity);
        assert!(cert.kappa0_bracket.0 <= cert.kappa0_direct && cert.kappa0_direct <= cert.kappa0_bracket.1);
        assert!(cert.gamma > 0.0 && cert.gamma < 1.0);
        assert!(cert.kappa_conservative <= cert.kappa);
        assert!(cert.lambda_gap <= -cert.kappa + cert.gap_tol, "{} vs {}", cert.lambda_gap, cert.kappa);
        assert!(cert.certified, "{:#?}", cert.hypotheses);
    }

    #[test]
    fn constant_tests_are_skipped() {
        let (_, op, data) = setup(8.0, 0.5, 256, 1.0);
        assert!(variance_ratio(&op, &data, &vec![2.0; 256]).is_none());
    }
}
