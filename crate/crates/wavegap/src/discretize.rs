//! Uniform grid, trapezoid quadrature, kernel convolution and difference
//! operators on a truncated domain `[-L, L]`.
//!
//! The kernel is normalized on the lattice: samples are divided by
//! `Σ_m h·w(mh)` so that the discrete operator maps constants to constants
//! exactly. The part of the integral beyond `±L` is closed with one-sided
//! lattice sums, which keeps `W·1 + tails = 1` to rounding.

use crate::error::{Error, Result};
use crate::model::Kernel;
use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::{Arc, OnceLock};

/// Below this size the convolution is applied as a dense sum.
pub const FFT_THRESHOLD: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub half_width: f64,
    pub n: usize,
    pub h: f64,
    pub x: Vec<f64>,
}

impl Grid {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::config("grid.half_width", "must be positive"));
        }
        if n < 16 {
            return Err(Error::config("grid.nodes", format!("need at least 16 nodes, got {n}")));
        }
        let h = 2.0 * half_width / (n - 1) as f64;
        let x = (0..n).map(|i| -half_width + i as f64 * h).collect();
        Ok(Self { half_width, n, h, x })
    }

    /// Trapezoid weights on `[-L, L]`.
    pub fn trapezoid(&self) -> Vec<f64> {
        let mut w = vec![self.h; self.n];
        w[0] *= 0.5;
        w[self.n - 1] *= 0.5;
        w
    }

    /// Index of the node closest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        (((x + self.half_width) / self.h).round().max(0.0) as usize).min(self.n - 1)
    }

    pub fn integrate(&self, v: &[f64]) -> f64 {
        trapezoid_sum(self.h, v)
    }
}

pub fn trapezoid_sum(h: f64, v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    h * (v[1..n - 1].iter().sum::<f64>() + 0.5 * (v[0] + v[n - 1]))
}

/// Discrete `v ↦ w * v` with constant extension beyond the grid.
#[derive(Clone)]
pub struct ConvolutionOperator {
    pub n: usize,
    pub h: f64,
    /// Normalized kernel at lags `m h`, `m = -(n-1)..=(n-1)`, offset by `n-1`.
    pub lag: Vec<f64>,
    /// Weight of the left constant extension at each node.
    pub tail_left: Vec<f64>,
    /// Weight of the right constant extension at each node.
    pub tail_right: Vec<f64>,
    /// Lattice mass used for normalization.
    pub lattice_mass: f64,
    fft: Arc<OnceLock<FftCache>>,
}

impl std::fmt::Debug for ConvolutionOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConvolutionOperator").field("n", &self.n).field("h", &self.h).finish_non_exhaustive()
    }
}

struct FftCache {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    kernel_hat: Vec<Complex<f64>>,
}

impl ConvolutionOperator {
    pub fn new(kernel: &Kernel, grid: &Grid) -> Self {
        let (n, h) = (grid.n, grid.h);
        let mass = kernel.lattice_mass(h);
        let lag: Vec<f64> = (0..2 * n - 1).map(|k| kernel.value((k as f64 - (n - 1) as f64) * h) / mass).collect();
        let tail_left = (0..n)
            .map(|i| kernel.lattice_tail(h, i + 1, true) / mass + 0.5 * h * lag[i + n - 1])
            .collect();
        let tail_right = (0..n)
            .map(|i| kernel.lattice_tail(h, n - i, false) / mass + 0.5 * h * lag[i])
            .collect();
        Self { n, h, lag, tail_left, tail_right, lattice_mass: mass, fft: Arc::new(OnceLock::new()) }
    }

    /// `Σ_j ω_j w(x_i - x_j) v_j + tl·T_L(i) + tr·T_R(i)` with trapezoid `ω`.
    pub fn convolve(&self, v: &[f64], tail_left: f64, tail_right: f64) -> Result<Vec<f64>> {
        self.check(v)?;
        let mut y = v.to_vec();
        y[0] *= 0.5;
        y[self.n - 1] *= 0.5;
        let mut out = if self.n < FFT_THRESHOLD { self.sum_direct(&y) } else { self.sum_fft(&y) };
        for i in 0..self.n {
            out[i] += tail_left * self.tail_left[i] + tail_right * self.tail_right[i];
        }
        Ok(out)
    }

    /// Same as [`convolve`](Self::convolve) but forcing the dense path.
    pub fn convolve_direct(&self, v: &[f64], tl: f64, tr: f64) -> Result<Vec<f64>> {
        self.check(v)?;
        let mut y = v.to_vec();
        y[0] *= 0.5;
        y[self.n - 1] *= 0.5;
        let mut out = self.sum_direct(&y);
        out.iter_mut().enumerate().for_each(|(i, o)| *o += tl * self.tail_left[i] + tr * self.tail_right[i]);
        Ok(out)
    }

    /// Same as [`convolve`](Self::convolve) but forcing the FFT path.
    pub fn convolve_fft(&self, v: &[f64], tl: f64, tr: f64) -> Result<Vec<f64>> {
        self.check(v)?;
        let mut y = v.to_vec();
        y[0] *= 0.5;
        y[self.n - 1] *= 0.5;
        let mut out = self.sum_fft(&y);
        out.iter_mut().enumerate().for_each(|(i, o)| *o += tl * self.tail_left[i] + tr * self.tail_right[i]);
        Ok(out)
    }

    /// Convolution of a perturbation that vanishes outside the grid. Every
    /// node carries weight `h` (trapezoid rule on the grid extended by one
    /// zero node on each side).
    pub fn convolve_zero_extended(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        if self.n < FFT_THRESHOLD {
            self.sum_direct(v)
        } else {
            self.sum_fft(v)
        }
    }

    /// `Σ_j h·lag(i-j)·y_j`.
    fn sum_direct(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                // row[n - 1 - j] is the kernel at lag (i - j) h
                let row = &self.lag[i..i + n];
                let mut acc = 0.0;
                for (j, yj) in y.iter().enumerate() {
                    acc += row[n - 1 - j] * yj;
                }
                self.h * acc
            })
            .collect()
    }

    fn sum_fft(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n;
        let cache = self.fft.get_or_init(|| {
            let len = (3 * n - 2).next_power_of_two();
            let mut planner = FftPlanner::new();
            let forward = planner.plan_fft_forward(len);
            let inverse = planner.plan_fft_inverse(len);
            let mut kernel_hat: Vec<Complex<f64>> = (0..len)
                .map(|k| Complex::new(if k < 2 * n - 1 { self.lag[k] } else { 0.0 }, 0.0))
                .collect();
            forward.process(&mut kernel_hat);
            FftCache { len, forward, inverse, kernel_hat }
        });
        let mut buf: Vec<Complex<f64>> =
            (0..cache.len).map(|k| Complex::new(if k < n { y[k] } else { 0.0 }, 0.0)).collect();
        cache.forward.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&cache.kernel_hat) {
            *b *= k;
        }
        cache.inverse.process(&mut buf);
        let scale = self.h / cache.len as f64;
        (0..n).map(|i| buf[i + n - 1].re * scale).collect()
    }

    /// Dense matrix of the trapezoid convolution (tails excluded).
    pub fn matrix_trapezoid(&self) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |i, j| {
            let w = if j == 0 || j == n - 1 { 0.5 * self.h } else { self.h };
            w * self.lag[i + n - 1 - j]
        })
    }

    /// Dense matrix of [`convolve_zero_extended`](Self::convolve_zero_extended).
    pub fn matrix_zero_extended(&self) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |i, j| self.h * self.lag[i + n - 1 - j])
    }

    /// Normalized kernel value at lag `(i - j) h`.
    pub fn kernel_at(&self, i: usize, j: usize) -> f64 {
        self.lag[i + self.n - 1 - j]
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.n {
            return Err(Error::Shape { expected: self.n, got: v.len() });
        }
        Ok(())
    }
}

/// How difference stencils treat the two boundary nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Closure {
    /// Second-order one-sided stencils at the boundary nodes.
    OneSided,
    /// Centered stencils with zero ghost values beyond the grid.
    ZeroGhost,
}

/// Compressed sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseRows {
    pub(crate) fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = vec![0];
        let (mut cols, mut vals) = (Vec::new(), Vec::new());
        for r in rows {
            for (c, v) in r {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, a)| a * v[j]).sum()).collect()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    /// `m += scale · self`.
    pub fn add_to(&self, m: &mut DMatrix<f64>, scale: f64) {
        for i in 0..self.n {
            for (j, a) in self.row(i) {
                m[(i, j)] += scale * a;
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        self.add_to(&mut m, 1.0);
        m
    }
}

/// First and second difference operators.
pub fn diff_matrices(grid: &Grid, closure: Closure) -> (SparseRows, SparseRows) {
    let (n, h) = (grid.n, grid.h);
    let mut d1 = Vec::with_capacity(n);
    let mut d2 = Vec::with_capacity(n);
    let (a, b) = (0.5 / h, 1.0 / (h * h));
    for i in 0..n {
        let interior = i > 0 && i < n - 1;
        if interior {
            d1.push(vec![(i - 1, -a), (i + 1, a)]);
            d2.push(vec![(i - 1, b), (i, -2.0 * b), (i + 1, b)]);
            continue;
        }
        match (closure, i == 0) {
            (Closure::OneSided, true) => {
                d1.push(vec![(0, -3.0 * a), (1, 4.0 * a), (2, -a)]);
                d2.push(vec![(0, 2.0 * b), (1, -5.0 * b), (2, 4.0 * b), (3, -b)]);
            }
            (Closure::OneSided, false) => {
                d1.push(vec![(n - 3, a), (n - 2, -4.0 * a), (n - 1, 3.0 * a)]);
                d2.push(vec![(n - 4, -b), (n - 3, 4.0 * b), (n - 2, -5.0 * b), (n - 1, 2.0 * b)]);
            }
            (Closure::ZeroGhost, true) => {
                d1.push(vec![(1, a)]);
                d2.push(vec![(0, -2.0 * b), (1, b)]);
            }
            (Closure::ZeroGhost, false) => {
                d1.push(vec![(n - 2, -a)]);
                d2.push(vec![(n - 2, b), (n - 1, -2.0 * b)]);
            }
        }
    }
    (SparseRows::from_rows(d1), SparseRows::from_rows(d2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(n: usize, kernel: Kernel) -> (Grid, ConvolutionOperator) {
        let g = Grid::new(20.0, n).unwrap();
        let c = ConvolutionOperator::new(&kernel, &g);
        (g, c)
    }

    #[test]
    fn constants_are_preserved() {
        for k in [Kernel::exponential(1.0).unwrap(), Kernel::gaussian(1.5).unwrap(), Kernel::bump(2.0).unwrap()] {
            let (g, c) = setup(300, k);
            let out = c.convolve(&vec![1.0; g.n], 1.0, 1.0).unwrap();
            assert!(out.iter().all(|v| (v - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn spike_reproduces_kernel() {
        let (g, c) = setup(401, Kernel::exponential(1.0).unwrap());
        let j = 200;
        let mut v = vec![0.0; g.n];
        v[j] = 1.0 / g.h;
        let out = c.convolve(&v, 0.0, 0.0).unwrap();
        for i in [150, 199, 200, 260] {
            let exact = (-(g.x[i] - g.x[j]).abs()).exp() / 2.0;
            assert!((out[i] - exact).abs() < 1e-3 * exact, "{i}");
        }
    }

    #[test]
    fn front_convolution_converges_at_second_order() {
        let front = |x: f64| 0.1 + 0.8 / (1.0 + (-2.0 * x).exp());
        let err = |n: usize| {
            let (g, c) = setup(n, Kernel::exponential(1.0).unwrap());
            let (gf, cf) = setup(4 * (n - 1) + 1, Kernel::exponential(1.0).unwrap());
            let v: Vec<f64> = g.x.iter().map(|&x| front(x)).collect();
            let vf: Vec<f64> = gf.x.iter().map(|&x| front(x)).collect();
            let a = c.convolve(&v, 0.1, 0.9).unwrap();
            let b = cf.convolve(&vf, 0.1, 0.9).unwrap();
            (0..n).map(|i| (a[i] - b[4 * i]).abs()).fold(0.0, f64::max)
        };
        let (e1, e2) = (err(201), err(401));
        assert!(e1 / e2 > 3.5 && e1 / e2 < 4.5, "{e1} {e2}");
    }

    #[test]
    fn fft_and_direct_paths_agree() {
        for k in [Kernel::exponential(0.8).unwrap(), Kernel::gaussian(1.0).unwrap()] {
            let (g, c) = setup(1000, k);
            let v: Vec<f64> = g.x.iter().map(|x| (0.3 * x).sin() + 0.2 * x.cos()).collect();
            let a = c.convolve_direct(&v, -0.4, 0.7).unwrap();
            let b = c.convolve_fft(&v, -0.4, 0.7).unwrap();
            let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(diff < 1e-10, "{diff}");
        }
    }

    #[test]
    fn matrix_matches_apply() {
        let (g, c) = setup(64, Kernel::gaussian(2.0).unwrap());
        let v: Vec<f64> = g.x.iter().map(|x| x.tanh()).collect();
        let m = c.matrix_trapezoid();
        let a = c.convolve(&v, 0.0, 0.0).unwrap();
        let b = &m * nalgebra::DVector::from_column_slice(&v);
        assert!((0..g.n).all(|i| (a[i] - b[i]).abs() < 1e-14));
        let z = c.matrix_zero_extended() * nalgebra::DVector::from_column_slice(&v);
        let zz = c.convolve_zero_extended(&v);
        assert!((0..g.n).all(|i| (z[i] - zz[i]).abs() < 1e-14));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let (_, c) = setup(32, Kernel::exponential(1.0).unwrap());
        assert!(matches!(c.convolve(&[1.0; 5], 0.0, 0.0), Err(Error::Shape { expected: 32, got: 5 })));
    }

    #[test]
    fn difference_stencils_are_exact_on_polynomials() {
        let g = Grid::new(3.0, 40).unwrap();
        let (d1, d2) = diff_matrices(&g, Closure::OneSided);
        let lin = d1.apply(&g.x);
        assert!(lin.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let sq: Vec<f64> = g.x.iter().map(|x| x * x).collect();
        assert!(d2.apply(&sq).iter().all(|v| (v - 2.0).abs() < 1e-9));
        let sq1 = d1.apply(&sq);
        assert!(g.x.iter().zip(&sq1).all(|(x, d)| (d - 2.0 * x).abs() < 1e-11));
    }

    #[test]
    fn sine_derivative_accuracy() {
        let g = Grid::new(10.0, 512).unwrap();
        let (d1, _) = diff_matrices(&g, Closure::OneSided);
        let s: Vec<f64> = g.x.iter().map(|x| x.sin()).collect();
        let err = d1.apply(&s).iter().zip(&g.x).map(|(d, x)| (d - x.cos()).abs()).fold(0.0, f64::max);
        assert!(err < 1e-3);
    }

    #[test]
    fn zero_ghost_first_difference_is_skew() {
        let g = Grid::new(1.0, 20).unwrap();
        let (d1, d2) = diff_matrices(&g, Closure::ZeroGhost);
        let (a, b) = (d1.to_dense(), d2.to_dense());
        assert!((&a + a.transpose()).abs().max() < 1e-14);
        assert!((&b - b.transpose()).abs().max() < 1e-10);
    }
}
