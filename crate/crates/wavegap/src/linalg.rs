//! Small dense and banded helpers not covered by nalgebra.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Number of eigenvalues below `x` of the symmetric tridiagonal matrix with
/// diagonal `d` and off-diagonal `e` (Sturm sequence count).
pub fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = d[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for k in 1..d.len() {
        let denom = if q == 0.0 { f64::EPSILON * (e[k - 1].abs() + 1e-300) } else { q };
        q = d[k] - x - e[k - 1] * e[k - 1] / denom;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// The `k`-th smallest eigenvalue (0-based) of a symmetric tridiagonal matrix
/// by bisection on the Sturm count.
pub fn tridiagonal_eigenvalue(d: &[f64], e: &[f64], k: usize) -> f64 {
    let n = d.len();
    assert!(k < n && e.len() + 1 == n);
    // Gershgorin bounds
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..n {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    let scale = lo.abs().max(hi.abs()).max(1e-300);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 4.0 * f64::EPSILON * scale.min(mid.abs().max(1e-300) * 1e3) || mid == lo || mid == hi {
            break;
        }
        if sturm_count(d, e, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves `A x = b` for tridiagonal `A` (sub `a`, diag `b`, super `c`) by the
/// Thomas algorithm. `a[0]` and `c[n-1]` are ignored.
pub fn thomas(a: &[f64], b: &[f64], c: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    dp[0] = rhs[0] / b[0];
    for i in 1..n {
        let m = b[i] - a[i] * cp[i - 1];
        cp[i] = if i + 1 < n { c[i] / m } else { 0.0 };
        dp[i] = (rhs[i] - a[i] * dp[i - 1]) / m;
    }
    let mut x = dp;
    for i in (0..n - 1).rev() {
        x[i] -= cp[i] * x[i + 1];
    }
    x
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson slopes);
/// constant extension outside `[x_0, x_{n-1}]`.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
    uniform: Option<(f64, f64)>,
}

impl MonotoneCubic {
    /// Knots `x` must be strictly increasing.
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if n != y.len() {
            return Err(Error::Shape { expected: n, got: y.len() });
        }
        if n < 2 {
            return Err(Error::Precondition("interpolation needs at least two knots".into()));
        }
        if let Some(k) = x.windows(2).position(|p| !(p[1] > p[0])) {
            return Err(Error::Monotonicity { what: "interpolation knots", min_slope: x[k + 1] - x[k], node: k });
        }
        let hs: Vec<f64> = x.windows(2).map(|p| p[1] - p[0]).collect();
        let delta: Vec<f64> = y.windows(2).zip(&hs).map(|(p, h)| (p[1] - p[0]) / h).collect();
        let mut d = vec![0.0; n];
        d[0] = delta[0];
        d[n - 1] = delta[n - 2];
        for k in 1..n - 1 {
            let (a, b) = (delta[k - 1], delta[k]);
            d[k] = if a * b <= 0.0 {
                0.0
            } else {
                let w1 = 2.0 * hs[k] + hs[k - 1];
                let w2 = hs[k] + 2.0 * hs[k - 1];
                (w1 + w2) / (w1 / a + w2 / b)
            };
        }
        Ok(Self { x: x.to_vec(), y: y.to_vec(), d, uniform: None })
    }

    pub fn uniform(x0: f64, h: f64, y: &[f64]) -> Self {
        let x: Vec<f64> = (0..y.len()).map(|i| x0 + i as f64 * h).collect();
        let mut m = Self::new(&x, y).expect("uniform knots are increasing");
        m.uniform = Some((x0, h));
        m
    }

    fn locate(&self, x: f64) -> Option<(usize, f64, f64)> {
        let n = self.x.len();
        if !(x > self.x[0] && x < self.x[n - 1]) {
            return None;
        }
        let k = match self.uniform {
            Some((x0, h)) => (((x - x0) / h).floor() as usize).min(n - 2),
            None => self.x.partition_point(|&xk| xk <= x) - 1,
        };
        let h = self.x[k + 1] - self.x[k];
        Some((k, (x - self.x[k]) / h, h))
    }

    pub fn eval(&self, x: f64) -> f64 {
        let Some((k, t, h)) = self.locate(x) else {
            return if x <= self.x[0] { self.y[0] } else { self.y[self.y.len() - 1] };
        };
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let Some((k, t, h)) = self.locate(x) else {
            return 0.0;
        };
        let t2 = t * t;
        let h00 = 6.0 * t2 - 6.0 * t;
        let h10 = 3.0 * t2 - 4.0 * t + 1.0;
        let h01 = -6.0 * t2 + 6.0 * t;
        let h11 = 3.0 * t2 - 2.0 * t;
        (h00 * self.y[k] + h01 * self.y[k + 1]) / h + h10 * self.d[k] + h11 * self.d[k + 1]
    }
}

/// LU factorization that also solves with the transpose.
pub struct Factored {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    l: DMatrix<f64>,
    u: DMatrix<f64>,
}

impl Factored {
    pub fn new(m: DMatrix<f64>) -> Self {
        let lu = m.lu();
        let (l, u) = (lu.l(), lu.u());
        Self { lu, l, u }
    }

    pub fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        self.lu.solve(&DVector::from_column_slice(b)).map(|v| v.as_slice().to_vec())
    }

    /// Solves `Aᵀ x = b` using `P A = L U`.
    pub fn solve_transpose(&self, b: &[f64]) -> Option<Vec<f64>> {
        let y = self.u.tr_solve_upper_triangular(&DVector::from_column_slice(b))?;
        let mut z = self.l.tr_solve_lower_triangular(&y)?;
        self.lu.p().inv_permute_rows(&mut z);
        Some(z.as_slice().to_vec())
    }
}

/// Inverse iteration for a null vector of `m` (or of `mᵀ` when `transpose`),
/// using a factorization of `m - shift·I`. After each solve the iterate is
/// divided by `norm(v)`. Stops when `‖m v‖∞ < tol`, or when the residual has
/// reached its floor (the eigenvalue closest to `shift` times `‖v‖`) and no
/// longer halves; returns the vector, that residual and the number of solves.
pub fn inverse_iteration(
    m: &DMatrix<f64>,
    shifted: &Factored,
    transpose: bool,
    start: &[f64],
    norm: &dyn Fn(&[f64]) -> f64,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, f64, usize)> {
    let mut v = start.to_vec();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let prev = residual;
        let next = if transpose { shifted.solve_transpose(&v) } else { shifted.solve(&v) };
        v = next.ok_or(Error::Degenerate { what: "shifted operator", value: 0.0 })?;
        let s = norm(&v);
        if !(s.is_finite() && s != 0.0) {
            return Err(Error::Degenerate { what: "inverse iteration normalization", value: s });
        }
        v.iter_mut().for_each(|x| *x /= s);
        let dv = DVector::from_column_slice(&v);
        residual = if transpose { m.tr_mul(&dv).amax() } else { (m * dv).amax() };
        if residual < tol || residual > 0.5 * prev {
            return Ok((v, residual, it));
        }
    }
    Err(Error::Convergence { what: "inverse iteration", iterations: max_iter, residual })
}

/// `m - shift·I`, factored.
pub fn factor_shifted(m: &DMatrix<f64>, shift: f64) -> Factored {
    let mut a = m.clone();
    for i in 0..a.nrows() {
        a[(i, i)] -= shift;
    }
    Factored::new(a)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn symmetric_top_eigenvalue(m: DMatrix<f64>) -> f64 {
    m.symmetric_eigenvalues().max()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sturm_bisection_matches_dense() {
        let n = 40;
        let d: Vec<f64> = (0..n).map(|i| 2.0 + (i as f64 * 0.37).sin()).collect();
        let e: Vec<f64> = (0..n - 1).map(|i| -1.0 + 0.3 * (i as f64 * 1.1).cos()).collect();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = d[i];
            if i + 1 < n {
                m[(i, i + 1)] = e[i];
                m[(i + 1, i)] = e[i];
            }
        }
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().cloned().collect();
        ev.sort_by(f64::total_cmp);
        for k in [0, 1, 7, n - 1] {
            assert!((tridiagonal_eigenvalue(&d, &e, k) - ev[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn thomas_solves_tridiagonal() {
        let n = 30;
        let a = vec![-1.0; n];
        let b = vec![3.0; n];
        let c = vec![-0.5; n];
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sqrt()).collect();
        let rhs: Vec<f64> = (0..n)
            .map(|i| b[i] * x[i] + if i > 0 { a[i] * x[i - 1] } else { 0.0 } + if i + 1 < n { c[i] * x[i + 1] } else { 0.0 })
            .collect();
        let got = thomas(&a, &b, &c, &rhs);
        assert!(got.iter().zip(&x).all(|(g, e)| (g - e).abs() < 1e-13));
    }

    #[test]
    fn monotone_cubic_is_monotone_and_interpolates() {
        let y: Vec<f64> = (0..50).map(|i| ((i as f64 - 25.0) * 0.8).tanh()).collect();
        let p = MonotoneCubic::uniform(-2.0, 0.1, &y);
        for (i, yi) in y.iter().enumerate() {
            assert!((p.eval(-2.0 + 0.1 * i as f64) - yi).abs() < 1e-14);
        }
        let mut last = f64::NEG_INFINITY;
        for k in 0..5000 {
            let v = p.eval(-2.5 + 6.0 * k as f64 / 5000.0);
            assert!(v >= last - 1e-15);
            last = v;
        }
        assert_eq!(p.eval(-10.0), y[0]);
    }

    #[test]
    fn monotone_cubic_accuracy_on_smooth_data() {
        let f = |x: f64| 1.0 / (1.0 + (-x).exp());
        let h = 0.05;
        let y: Vec<f64> = (0..401).map(|i| f(-10.0 + h * i as f64)).collect();
        let p = MonotoneCubic::uniform(-10.0, h, &y);
        let err = (0..1000).map(|k| -9.0 + 0.0181 * k as f64).map(|x| (p.eval(x) - f(x)).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
        let derr = (0..1000).map(|k| -9.0 + 0.0181 * k as f64).map(|x| (p.derivative(x) - f(x) * (1.0 - f(x))).abs()).fold(0.0, f64::max);
        assert!(derr < 1e-3, "{derr}");
    }

    #[test]
    fn transpose_solve_matches_explicit_transpose() {
        let n = 25;
        let m = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0 + if i == j { 3.0 } else { 0.0 });
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let f = Factored::new(m.clone());
        let x = f.solve_transpose(&b).unwrap();
        let r = m.transpose() * DVector::from_column_slice(&x) - DVector::from_column_slice(&b);
        assert!(r.amax() < 1e-10, "{}", r.amax());
        let x = f.solve(&b).unwrap();
        let r = &m * DVector::from_column_slice(&x) - DVector::from_column_slice(&b);
        assert!(r.amax() < 1e-10);
    }

    #[test]
    fn nonuniform_knots_interpolate_monotone_data() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.1).powi(2)).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sqrt()).collect();
        let p = MonotoneCubic::new(&x, &y).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((p.eval(*xi) - yi).abs() < 1e-14);
        }
        assert!((p.eval(4.0) - 2.0).abs() < 1e-3);
        assert!(MonotoneCubic::new(&[0.0, 1.0, 1.0], &[0.0, 1.0, 2.0]).is_err());
    }

    #[test]
    fn inverse_iteration_finds_null_vector() {
        // graph Laplacian of a path has the constant null vector
        let n = 10;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n - 1 {
            m[(i, i)] -= 1.0;
            m[(i + 1, i + 1)] -= 1.0;
            m[(i, i + 1)] += 1.0;
            m[(i + 1, i)] += 1.0;
        }
        let start: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
        let f = factor_shifted(&m, 1e-8);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (v, res, _) = inverse_iteration(&m, &f, false, &start, &mean, 1e-12, 50).unwrap();
        assert!(res < 1e-12);
        assert!(v.iter().all(|x| (x - 1.0).abs() < 1e-10));
        let (v, _, _) = inverse_iteration(&m, &f, true, &start, &mean, 1e-12, 50).unwrap();
        assert!(v.iter().all(|x| (x - 1.0).abs() < 1e-10));
    }
}
