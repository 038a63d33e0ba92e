//! Kernels, gain functions and bistable reaction terms.
//!
//! A [`BistableSystem`] describes `u_t = d u_xx + S(u, w * g(u))` on the line.
//! Two reaction presets are provided: the neural field (`S = -x + g`, `g = F`)
//! and the convolution phase-transition model (`S = λg - x + k x(1-x)(x-a)`,
//! `g = id`).

use crate::error::{Error, Result};
use crate::quad;
use std::path::Path;

/// Connectivity kernel `w` with unit mass.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// `w(x) = exp(-|x|/σ) / (2σ)`.
    Exponential { scale: f64 },
    /// `w(x) = exp(-x²/(2s²)) / (s√(2π))`.
    Gaussian { scale: f64 },
    /// `w(x) ∝ exp(-1/(1-(x/b)²))` on `|x| < b`.
    Bump { half_width: f64, norm: f64 },
    /// Piecewise-linear interpolation of samples, zero outside the table.
    Tabulated { xs: Vec<f64>, ws: Vec<f64> },
}

impl Kernel {
    pub fn exponential(scale: f64) -> Result<Self> {
        positive("kernel.scale", scale)?;
        Ok(Kernel::Exponential { scale })
    }

    pub fn gaussian(scale: f64) -> Result<Self> {
        positive("kernel.scale", scale)?;
        Ok(Kernel::Gaussian { scale })
    }

    pub fn bump(half_width: f64) -> Result<Self> {
        positive("kernel.half_width", half_width)?;
        let raw = |x: f64| bump_profile(x / half_width);
        let mass = quad::adaptive_simpson(&raw, -half_width, half_width, 1e-14);
        Ok(Kernel::Bump { half_width, norm: 1.0 / mass })
    }

    /// Builds a kernel from samples, renormalized to unit trapezoid mass.
    pub fn tabulated(xs: Vec<f64>, ws: Vec<f64>) -> Result<Self> {
        if xs.len() != ws.len() {
            return Err(Error::Shape { expected: xs.len(), got: ws.len() });
        }
        if xs.len() < 3 {
            return Err(Error::config("kernel.table", "need at least 3 samples"));
        }
        if xs.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::config("kernel.table", "abscissae must be strictly increasing"));
        }
        if ws.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::config("kernel.table", "weights must be finite and non-negative"));
        }
        let mass: f64 = xs
            .windows(2)
            .zip(ws.windows(2))
            .map(|(x, w)| 0.5 * (x[1] - x[0]) * (w[0] + w[1]))
            .sum();
        if mass <= 0.0 {
            return Err(Error::NonPositive { what: "tabulated kernel mass", value: mass });
        }
        let ws = ws.into_iter().map(|w| w / mass).collect();
        Ok(Kernel::Tabulated { xs, ws })
    }

    /// Reads a two-column CSV `x,w` (a header row is allowed).
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)?;
        let (mut xs, mut ws) = (Vec::new(), Vec::new());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parsed: Option<(f64, f64)> = match (rec.get(0), rec.get(1)) {
                (Some(a), Some(b)) => a.parse().ok().zip(b.parse().ok()),
                _ => None,
            };
            match parsed {
                Some((x, w)) => {
                    xs.push(x);
                    ws.push(w);
                }
                None if line == 0 => continue,
                None => {
                    return Err(Error::config(
                        "kernel.table",
                        format!("{}: bad row {}", path.display(), line + 1),
                    ))
                }
            }
        }
        Self::tabulated(xs, ws)
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Kernel::Exponential { scale } => (-x.abs() / scale).exp() / (2.0 * scale),
            Kernel::Gaussian { scale } => {
                (-0.5 * (x / scale).powi(2)).exp() / (scale * (2.0 * std::f64::consts::PI).sqrt())
            }
            Kernel::Bump { half_width, norm } => norm * bump_profile(x / half_width),
            Kernel::Tabulated { xs, ws } => match locate(xs, x) {
                Some(k) => {
                    let t = (x - xs[k]) / (xs[k + 1] - xs[k]);
                    ws[k] * (1.0 - t) + ws[k + 1] * t
                }
                None => 0.0,
            },
        }
    }

    /// `w_x`, with `w_x(0) := 0` for the exponential kernel.
    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Kernel::Exponential { scale } => {
                if x == 0.0 {
                    0.0
                } else {
                    -x.signum() * self.value(x) / scale
                }
            }
            Kernel::Gaussian { scale } => -x / (scale * scale) * self.value(x),
            Kernel::Bump { half_width, norm } => {
                let s = x / half_width;
                if s.abs() >= 1.0 {
                    0.0
                } else {
                    let d = 1.0 - s * s;
                    norm * bump_profile(s) * (-2.0 * s / (d * d)) / half_width
                }
            }
            Kernel::Tabulated { xs, ws } => match locate(xs, x) {
                Some(k) => (ws[k + 1] - ws[k]) / (xs[k + 1] - xs[k]),
                None => 0.0,
            },
        }
    }

    /// `w_x / w` on the support; `None` where `w = 0`.
    pub fn log_derivative(&self, x: f64) -> Option<f64> {
        match self {
            Kernel::Exponential { scale } => Some(if x == 0.0 { 0.0 } else { -x.signum() / scale }),
            Kernel::Gaussian { scale } => Some(-x / (scale * scale)),
            Kernel::Bump { half_width, .. } => {
                let s = x / half_width;
                (s.abs() < 1.0).then(|| {
                    let d = 1.0 - s * s;
                    -2.0 * s / (d * d) / half_width
                })
            }
            Kernel::Tabulated { .. } => {
                let w = self.value(x);
                (w > 0.0).then(|| self.derivative(x) / w)
            }
        }
    }

    /// `(w_x / w)²` as an almost-everywhere function: at the kink of the
    /// exponential kernel the value is the common limit `1/σ²` of both sides.
    pub fn log_derivative_sq(&self, x: f64) -> Option<f64> {
        match self {
            Kernel::Exponential { scale } => Some(1.0 / (scale * scale)),
            _ => self.log_derivative(x).map(|v| v * v),
        }
    }

    /// `‖w‖∞`.
    pub fn sup(&self) -> f64 {
        match self {
            Kernel::Tabulated { ws, .. } => ws.iter().cloned().fold(0.0, f64::max),
            _ => self.value(0.0),
        }
    }

    /// Characteristic length used for default domain sizes.
    pub fn length_scale(&self) -> f64 {
        match self {
            Kernel::Exponential { scale } | Kernel::Gaussian { scale } => *scale,
            Kernel::Bump { half_width, .. } => half_width / 3.0,
            Kernel::Tabulated { xs, ws } => {
                let m2: f64 = xs
                    .windows(2)
                    .zip(ws.windows(2))
                    .map(|(x, w)| 0.5 * (x[1] - x[0]) * (w[0] * x[0] * x[0] + w[1] * x[1] * x[1]))
                    .sum();
                m2.sqrt()
            }
        }
    }

    /// Half-width of the support, `None` for kernels with unbounded support.
    pub fn support_radius(&self) -> Option<f64> {
        match self {
            Kernel::Exponential { .. } | Kernel::Gaussian { .. } => None,
            Kernel::Bump { half_width, .. } => Some(*half_width),
            Kernel::Tabulated { xs, .. } => Some(xs[0].abs().max(xs[xs.len() - 1].abs())),
        }
    }

    /// `Σ_{m ≥ k} h·w(±m h)`: one-sided lattice sums of the kernel.
    /// `positive` selects the sign of the lags.
    pub fn lattice_tail(&self, h: f64, k: usize, positive: bool) -> f64 {
        let sgn = if positive { 1.0 } else { -1.0 };
        match self {
            Kernel::Exponential { scale } => {
                let q = (-h / scale).exp();
                h / (2.0 * scale) * q.powi(k as i32) / (1.0 - q)
            }
            _ => {
                let reach = match self.support_radius() {
                    Some(r) => (r / h).ceil() as usize + 1,
                    None => ((40.0 * self.length_scale()) / h).ceil() as usize + 1,
                };
                if k > reach {
                    return 0.0;
                }
                // summed from the far end so the result is independent of k's
                // position within the range
                (k..=reach).rev().map(|m| h * self.value(sgn * m as f64 * h)).sum()
            }
        }
    }

    /// `Σ_{m∈ℤ} h·w(m h)`, the lattice mass of the kernel.
    pub fn lattice_mass(&self, h: f64) -> f64 {
        self.lattice_tail(h, 1, true) + h * self.value(0.0) + self.lattice_tail(h, 1, false)
    }
}

fn bump_profile(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

fn locate(xs: &[f64], x: f64) -> Option<usize> {
    if x < xs[0] || x > xs[xs.len() - 1] {
        return None;
    }
    let k = xs.partition_point(|&t| t <= x);
    Some(k.clamp(1, xs.len() - 1) - 1)
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be positive and finite, got {v}")))
    }
}

/// Gain function `F`.
#[derive(Debug, Clone, PartialEq)]
pub enum Gain {
    /// `F(u) = 1 / (1 + exp(-β(u - θ)))`.
    Sigmoid { steepness: f64, threshold: f64 },
    /// `F(u) = Σ c_k u^k`; only used as a test surrogate.
    Polynomial { coeffs: Vec<f64> },
}

impl Gain {
    pub fn sigmoid(steepness: f64, threshold: f64) -> Result<Self> {
        positive("model.gain.steepness", steepness)?;
        if !threshold.is_finite() {
            return Err(Error::config("model.gain.threshold", "must be finite"));
        }
        Ok(Gain::Sigmoid { steepness, threshold })
    }

    pub fn f(&self, u: f64) -> f64 {
        match self {
            Gain::Sigmoid { steepness, threshold } => logistic(steepness * (u - threshold)),
            Gain::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c),
        }
    }

    pub fn df(&self, u: f64) -> f64 {
        match self {
            Gain::Sigmoid { steepness, threshold } => {
                let s = logistic(steepness * (u - threshold));
                steepness * s * (1.0 - s)
            }
            Gain::Polynomial { coeffs } => poly_derivative(coeffs, u, 1),
        }
    }

    pub fn d2f(&self, u: f64) -> f64 {
        match self {
            Gain::Sigmoid { steepness, threshold } => {
                let s = logistic(steepness * (u - threshold));
                steepness * steepness * s * (1.0 - s) * (1.0 - 2.0 * s)
            }
            Gain::Polynomial { coeffs } => poly_derivative(coeffs, u, 2),
        }
    }

    /// Inflection point `z` for a sigmoid.
    pub fn inflection(&self) -> Option<f64> {
        match self {
            Gain::Sigmoid { threshold, .. } => Some(*threshold),
            Gain::Polynomial { .. } => None,
        }
    }

    /// `‖F'‖∞`; polynomial gains are bounded on `[lo, hi]` by sampling.
    pub fn sup_df(&self, lo: f64, hi: f64) -> f64 {
        match self {
            Gain::Sigmoid { steepness, .. } => steepness / 4.0,
            Gain::Polynomial { .. } => sample_sup(|u| self.df(u), lo, hi),
        }
    }

    /// `‖F''‖∞ = β²/(6√3)` for the sigmoid.
    pub fn sup_d2f(&self, lo: f64, hi: f64) -> f64 {
        match self {
            Gain::Sigmoid { steepness, .. } => steepness * steepness / (6.0 * 3f64.sqrt()),
            Gain::Polynomial { .. } => sample_sup(|u| self.d2f(u), lo, hi),
        }
    }

    /// Number of sign changes of `F''` on a uniform sample of `[lo, hi]`.
    pub fn curvature_sign_changes(&self, lo: f64, hi: f64, samples: usize) -> usize {
        let mut last = 0.0f64;
        let mut changes = 0;
        for k in 0..=samples {
            let v = self.d2f(lo + (hi - lo) * k as f64 / samples as f64);
            if v.abs() < 1e-300 {
                continue;
            }
            if last != 0.0 && v.signum() != last.signum() {
                changes += 1;
            }
            last = v;
        }
        changes
    }
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn poly_derivative(coeffs: &[f64], u: f64, order: u32) -> f64 {
    let mut acc = 0.0;
    for (k, c) in coeffs.iter().enumerate().rev() {
        let k = k as u32;
        if k < order {
            break;
        }
        let falling: f64 = (0..order).map(|j| (k - j) as f64).product();
        acc += c * falling * u.powi((k - order) as i32);
    }
    acc
}

fn sample_sup(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    (0..=4096).map(|k| f(lo + (hi - lo) * k as f64 / 4096.0).abs()).fold(0.0, f64::max)
}

/// Reaction term `S(x, g)` together with the composition function `g`.
#[derive(Debug, Clone, PartialEq)]
pub enum Nonlinearity {
    /// `S(x, g) = -x + g`, `g = F`.
    NeuralField { gain: Gain },
    /// `S(x, g) = λg - x + k·x(1-x)(x-a)`, `g = id`.
    PhaseTransition { lambda: f64, k: f64, a: f64 },
}

impl Nonlinearity {
    pub fn s(&self, x: f64, g: f64) -> f64 {
        match self {
            Nonlinearity::NeuralField { .. } => -x + g,
            Nonlinearity::PhaseTransition { lambda, k, a } => lambda * g - x + k * x * (1.0 - x) * (x - a),
        }
    }

    /// `∂₁S`.
    pub fn ds_dx(&self, x: f64, _g: f64) -> f64 {
        match self {
            Nonlinearity::NeuralField { .. } => -1.0,
            Nonlinearity::PhaseTransition { k, a, .. } => {
                -1.0 + k * (-3.0 * x * x + 2.0 * (1.0 + a) * x - a)
            }
        }
    }

    /// `∂₂S`.
    pub fn ds_dg(&self, _x: f64, _g: f64) -> f64 {
        match self {
            Nonlinearity::NeuralField { .. } => 1.0,
            Nonlinearity::PhaseTransition { lambda, .. } => *lambda,
        }
    }

    pub fn g(&self, u: f64) -> f64 {
        match self {
            Nonlinearity::NeuralField { gain } => gain.f(u),
            Nonlinearity::PhaseTransition { .. } => u,
        }
    }

    pub fn dg(&self, u: f64) -> f64 {
        match self {
            Nonlinearity::NeuralField { gain } => gain.df(u),
            Nonlinearity::PhaseTransition { .. } => 1.0,
        }
    }

    pub fn d2g(&self, u: f64) -> f64 {
        match self {
            Nonlinearity::NeuralField { gain } => gain.d2f(u),
            Nonlinearity::PhaseTransition { .. } => 0.0,
        }
    }

    pub fn gain(&self) -> Option<&Gain> {
        match self {
            Nonlinearity::NeuralField { gain } => Some(gain),
            Nonlinearity::PhaseTransition { .. } => None,
        }
    }
}

/// `u_t = d u_xx + S(u, w * g(u))`.
#[derive(Debug, Clone, PartialEq)]
pub struct BistableSystem {
    pub kernel: Kernel,
    pub nonlinearity: Nonlinearity,
    pub diffusion: f64,
}

/// The three constant states `a₁ < a < a₂`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FixedPoints {
    pub a1: f64,
    pub a: f64,
    pub a2: f64,
}

impl BistableSystem {
    pub fn new(kernel: Kernel, nonlinearity: Nonlinearity, diffusion: f64) -> Result<Self> {
        if !(diffusion.is_finite() && diffusion >= 0.0) {
            return Err(Error::config("model.diffusion", "must be finite and >= 0"));
        }
        Ok(Self { kernel, nonlinearity, diffusion })
    }

    pub fn neural_field(kernel: Kernel, gain: Gain) -> Self {
        Self { kernel, nonlinearity: Nonlinearity::NeuralField { gain }, diffusion: 0.0 }
    }

    /// `x ↦ S(x, g(x))`: the reaction seen by constant states (`w * 1 = 1`).
    pub fn balance(&self, x: f64) -> f64 {
        self.nonlinearity.s(x, self.nonlinearity.g(x))
    }

    pub fn balance_slope(&self, x: f64) -> f64 {
        let g = self.nonlinearity.g(x);
        self.nonlinearity.ds_dx(x, g) + self.nonlinearity.ds_dg(x, g) * self.nonlinearity.dg(x)
    }

    /// Sign-change scan on 1024 subintervals of `[lo, hi]`, bisection to a
    /// bracket of width 1e-13, then a guarded Newton polish.
    pub fn find_fixed_points(&self, lo: f64, hi: f64) -> Result<FixedPoints> {
        const CELLS: usize = 1024;
        let xs: Vec<f64> = (0..=CELLS).map(|k| lo + (hi - lo) * k as f64 / CELLS as f64).collect();
        let vals: Vec<f64> = xs.iter().map(|&x| self.balance(x)).collect();
        let mut roots = Vec::new();
        for k in 0..CELLS {
            let (a, b) = (vals[k], vals[k + 1]);
            if a == 0.0 {
                roots.push(xs[k]);
            } else if a * b < 0.0 {
                roots.push(self.polish(xs[k], xs[k + 1]));
            }
        }
        if vals[CELLS] == 0.0 {
            roots.push(xs[CELLS]);
        }
        roots.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        if roots.len() != 3 {
            return Err(Error::RootCount { found: roots.len(), lo, hi });
        }
        for (i, &r) in roots.iter().enumerate() {
            let slope = self.balance_slope(r);
            let ok = if i == 1 { slope > 0.0 } else { slope < 0.0 };
            if !ok {
                return Err(Error::Stability { root: r, slope });
            }
        }
        Ok(FixedPoints { a1: roots[0], a: roots[1], a2: roots[2] })
    }

    fn polish(&self, mut a: f64, mut b: f64) -> f64 {
        let fa = self.balance(a);
        for _ in 0..200 {
            if b - a < 1e-13 {
                break;
            }
            let m = 0.5 * (a + b);
            let fm = self.balance(m);
            if fm == 0.0 {
                return m;
            }
            if (fm > 0.0) == (fa > 0.0) {
                a = m;
            } else {
                b = m;
            }
        }
        let mut x = 0.5 * (a + b);
        for _ in 0..3 {
            let s = self.balance_slope(x);
            if s == 0.0 {
                break;
            }
            let next = x - self.balance(x) / s;
            if (next - x).abs() > 1e-12 {
                break;
            }
            x = next;
        }
        x
    }

    /// Grid samples of `f = -∂₁S`, `r = ∂₂S`, `q = g'` along a profile.
    pub fn coefficient_fields(&self, u: &[f64], conv_g: &[f64]) -> Result<CoefficientFields> {
        if u.len() != conv_g.len() {
            return Err(Error::Shape { expected: u.len(), got: conv_g.len() });
        }
        let nl = &self.nonlinearity;
        let f: Vec<f64> = u.iter().zip(conv_g).map(|(&x, &g)| -nl.ds_dx(x, g)).collect();
        let r: Vec<f64> = u.iter().zip(conv_g).map(|(&x, &g)| nl.ds_dg(x, g)).collect();
        let q: Vec<f64> = u.iter().map(|&x| nl.dg(x)).collect();
        for (what, v) in [("r", &r), ("q", &q)] {
            let (node, min) = argmin(v);
            if !(min > 0.0) {
                return Err(Error::Positivity { what, min, node });
            }
        }
        Ok(CoefficientFields::new(f, r, q))
    }
}

/// Grid samples of the coefficient fields of the frozen operator.
#[derive(Debug, Clone)]
pub struct CoefficientFields {
    pub f: Vec<f64>,
    pub r: Vec<f64>,
    pub q: Vec<f64>,
    pub f_bounds: (f64, f64),
    pub r_bounds: (f64, f64),
    pub q_bounds: (f64, f64),
}

impl CoefficientFields {
    pub fn new(f: Vec<f64>, r: Vec<f64>, q: Vec<f64>) -> Self {
        let b = |v: &[f64]| (argmin(v).1, v.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        let (f_bounds, r_bounds, q_bounds) = (b(&f), b(&r), b(&q));
        Self { f, r, q, f_bounds, r_bounds, q_bounds }
    }

    /// The symmetrizing density `𝔪 = q/r`.
    pub fn symmetrizer(&self) -> Vec<f64> {
        self.q.iter().zip(&self.r).map(|(q, r)| q / r).collect()
    }
}

pub(crate) fn argmin(v: &[f64]) -> (usize, f64) {
    v.iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(i, m), (j, &x)| if x < m { (j, x) } else { (i, m) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nfe(beta: f64, theta: f64) -> BistableSystem {
        BistableSystem::neural_field(Kernel::exponential(1.0).unwrap(), Gain::sigmoid(beta, theta).unwrap())
    }

    #[test]
    fn factored_cubic_roots() {
        // F(x) - x = -4 x (x - 0.5)(x - 1)
        let gain = Gain::Polynomial { coeffs: vec![0.0, -1.0, 6.0, -4.0] };
        let sys = BistableSystem::neural_field(Kernel::exponential(1.0).unwrap(), gain);
        let fp = sys.find_fixed_points(-10.0, 10.0).unwrap();
        assert!(fp.a1.abs() < 1e-12 && (fp.a - 0.5).abs() < 1e-12 && (fp.a2 - 1.0).abs() < 1e-12, "{fp:?}");
    }

    #[test]
    fn steep_sigmoid_roots_match_bisection() {
        let sys = nfe(20.0, 0.4);
        let fp = sys.find_fixed_points(-10.0, 10.0).unwrap();
        let g = |x: f64| x - 1.0 / (1.0 + (-20.0 * (x - 0.4)).exp());
        for (root, lo, hi) in [(fp.a1, -0.2, 0.2), (fp.a, 0.2, 0.6), (fp.a2, 0.6, 1.2)] {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if (g(m) > 0.0) == (g(a) > 0.0) { a = m } else { b = m }
            }
            assert!((root - 0.5 * (a + b)).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_sigmoid_has_midpoint_root() {
        let fp = nfe(10.0, 0.5).find_fixed_points(-10.0, 10.0).unwrap();
        assert!((fp.a - 0.5).abs() < 1e-12);
        assert!((fp.a1 + fp.a2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shallow_sigmoid_is_not_bistable() {
        assert!(matches!(nfe(2.0, 0.5).find_fixed_points(-10.0, 10.0), Err(Error::RootCount { found: 1, .. })));
    }

    #[test]
    fn neural_field_coefficients() {
        let sys = nfe(20.0, 0.4);
        let u = [0.0, 0.3, 0.4, 0.9];
        let c = sys.coefficient_fields(&u, &[0.0; 4]).unwrap();
        assert!(c.f.iter().all(|&v| v == 1.0) && c.r.iter().all(|&v| v == 1.0));
        for (q, &x) in c.q.iter().zip(&u) {
            assert_eq!(*q, sys.nonlinearity.dg(x));
        }
        assert!(c.q_bounds.0 <= c.q_bounds.1);
    }

    #[test]
    fn phase_transition_coefficients() {
        let nl = Nonlinearity::PhaseTransition { lambda: 1.5, k: 2.0, a: 0.3 };
        let sys = BistableSystem::new(Kernel::exponential(1.0).unwrap(), nl, 0.0).unwrap();
        let c = sys.coefficient_fields(&[0.1, 0.5], &[0.0, 0.0]).unwrap();
        assert!(c.r.iter().all(|&v| v == 1.5) && c.q.iter().all(|&v| v == 1.0));
        // f = 1 - k p'(x), p = x(1-x)(x-a)
        let pp = |x: f64| -3.0 * x * x + 2.0 * 1.3 * x - 0.3;
        assert!((c.f[0] - (1.0 - 2.0 * pp(0.1))).abs() < 1e-15);
    }

    #[test]
    fn phase_transition_unit_lambda_roots() {
        let nl = Nonlinearity::PhaseTransition { lambda: 1.0, k: 2.0, a: 0.35 };
        let sys = BistableSystem::new(Kernel::exponential(1.0).unwrap(), nl, 0.25).unwrap();
        let fp = sys.find_fixed_points(-10.0, 10.0).unwrap();
        assert!(fp.a1.abs() < 1e-12 && (fp.a - 0.35).abs() < 1e-12 && (fp.a2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_log_derivative_is_exact() {
        let k = Kernel::exponential(0.7).unwrap();
        for x in [-3.0, -0.1, 0.2, 5.0] {
            assert_eq!(k.log_derivative(x), Some(-f64::signum(x) / 0.7));
        }
        assert_eq!(k.derivative(0.0), 0.0);
        assert_eq!(k.log_derivative_sq(0.0), Some(1.0 / (0.7 * 0.7)));
    }

    #[test]
    fn kernels_have_unit_mass() {
        let kernels = [
            Kernel::exponential(1.3).unwrap(),
            Kernel::gaussian(0.8).unwrap(),
            Kernel::bump(2.0).unwrap(),
            Kernel::tabulated(vec![-1.0, 0.0, 1.0], vec![0.0, 3.0, 0.0]).unwrap(),
        ];
        for k in &kernels {
            let r = k.support_radius().unwrap_or(40.0 * k.length_scale());
            let mass = quad::adaptive_simpson(&|x| k.value(x), -r, 0.0, 1e-13)
                + quad::adaptive_simpson(&|x| k.value(x), 0.0, r, 1e-13);
            assert!((mass - 1.0).abs() < 1e-8, "{k:?}: {mass}");
            assert!((k.lattice_mass(0.01) - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let kernels = [Kernel::gaussian(0.8).unwrap(), Kernel::bump(2.0).unwrap(), Kernel::exponential(1.0).unwrap()];
        for k in &kernels {
            for x in [-1.3, -0.4, 0.3, 1.1] {
                let e = 1e-6;
                let fd = (k.value(x + e) - k.value(x - e)) / (2.0 * e);
                assert!((fd - k.derivative(x)).abs() < 1e-6 * (1.0 + fd.abs()));
            }
        }
        let gain = Gain::sigmoid(8.0, 0.45).unwrap();
        for u in [-0.2, 0.3, 0.45, 0.9] {
            let e = 1e-6;
            assert!(((gain.f(u + e) - gain.f(u - e)) / (2.0 * e) - gain.df(u)).abs() < 1e-6);
            assert!(((gain.df(u + e) - gain.df(u - e)) / (2.0 * e) - gain.d2f(u)).abs() < 1e-5);
        }
    }

    #[test]
    fn sigmoid_sup_norms() {
        let gain = Gain::sigmoid(12.0, 0.3).unwrap();
        let num = |f: &dyn Fn(f64) -> f64| (0..=200_000).map(|k| f(-1.0 + 2.6 * k as f64 / 200_000.0).abs()).fold(0.0, f64::max);
        assert!((num(&|u| gain.df(u)) - gain.sup_df(0.0, 1.0)).abs() < 1e-6);
        assert!((num(&|u| gain.d2f(u)) - gain.sup_d2f(0.0, 1.0)).abs() < 1e-4);
        assert_eq!(gain.curvature_sign_changes(-2.0, 2.0, 1000), 1);
    }

    #[test]
    fn tabulated_kernel_from_csv() {
        let dir = std::env::temp_dir().join(format!("wavegap-kernel-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("k.csv");
        std::fs::write(&path, "x,w\n-2,0\n-1,1\n0,2\n1,1\n2,0\n").unwrap();
        let k = Kernel::from_csv(&path).unwrap();
        assert!((k.value(0.0) - 0.5).abs() < 1e-15);
        assert!((k.value(0.5) - 0.375).abs() < 1e-15);
        assert_eq!(k.value(3.0), 0.0);
        std::fs::write(&path, "x,w\n-2,0\nfoo,1\n").unwrap();
        assert!(Kernel::from_csv(&path).is_err());
    }
}
