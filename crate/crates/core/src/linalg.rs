//! Dense row-major matrices, the handful of products the models need, and
//! the Adam optimizer.
//!
//! Every product goes through `matrixmultiply::dgemm`, so a given output
//! element is always accumulated in the same order for a given inner
//! dimension. The full-neighborhood equivalence checks rely on that.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix buffer size");
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Uniform Glorot initialization, ±sqrt(6 / (fan_in + fan_out)).
    pub fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Gathers the listed rows into a new matrix.
    pub fn gather_rows(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(idx.len(), self.cols);
        for (o, &i) in idx.iter().enumerate() {
            out.row_mut(o).copy_from_slice(self.row(i));
        }
        out
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            c.iter_mut().for_each(|x| *x = 0.0);
        }
        return;
    }
    // SAFETY: the callers pass buffers whose sizes match the strides and
    // dimensions (checked by the asserts in the public wrappers).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `a · bᵀ` for `a: n×k`, `b: m×k`. This is the layer forward `X Wᵀ`.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.cols, "matmul_nt inner dimension");
    let mut out = Matrix::zeros(a.rows, b.rows);
    gemm(
        a.rows,
        a.cols,
        b.rows,
        &a.data,
        a.cols as isize,
        1,
        &b.data,
        1,
        b.cols as isize,
        0.0,
        &mut out.data,
    );
    out
}

/// `a · b` for `a: n×m`, `b: m×k`. This is the input gradient `dY W`.
pub fn matmul_nn(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.rows, "matmul_nn inner dimension");
    let mut out = Matrix::zeros(a.rows, b.cols);
    gemm(
        a.rows,
        a.cols,
        b.cols,
        &a.data,
        a.cols as isize,
        1,
        &b.data,
        b.cols as isize,
        1,
        0.0,
        &mut out.data,
    );
    out
}

/// `out += aᵀ · b` for `a: n×m`, `b: n×k`. This is the weight gradient `dYᵀ X`.
pub fn matmul_tn_acc(a: &Matrix, b: &Matrix, out: &mut Matrix) {
    assert_eq!(a.rows, b.rows, "matmul_tn inner dimension");
    assert_eq!((out.rows, out.cols), (a.cols, b.cols), "matmul_tn output");
    gemm(
        a.cols,
        a.rows,
        b.cols,
        &a.data,
        1,
        a.cols as isize,
        &b.data,
        b.cols as isize,
        1,
        1.0,
        &mut out.data,
    );
}

/// `W x` as a one-row product, so single-vector paths round identically
/// to the batched ones.
pub fn matvec(w: &Matrix, x: &[f64]) -> Vec<f64> {
    assert_eq!(w.cols, x.len(), "matvec dimension");
    let xm = Matrix::from_vec(1, x.len(), x.to_vec());
    matmul_nt(&xm, w).data
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d = norm(a) * norm(b);
    if d == 0.0 {
        0.0
    } else {
        dot(a, b) / d
    }
}

/// Adds `x` into `acc` elementwise.
#[inline]
pub fn add_assign(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

#[inline]
pub fn relu_inplace(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// L2 normalization with its backward pass.
pub mod l2 {
    use super::{dot, norm};

    /// Returns `(x / ‖x‖, ‖x‖)`. Callers decide what to do below their
    /// own singularity threshold; this only guards exact zero.
    pub fn normalize(x: &[f64]) -> (Vec<f64>, f64) {
        let n = norm(x);
        if n == 0.0 {
            return (vec![0.0; x.len()], 0.0);
        }
        (x.iter().map(|v| v / n).collect(), n)
    }

    /// Gradient w.r.t. the unnormalized input given `dz` at the output
    /// `z = x / ‖x‖`: `(dz − z (z·dz)) / ‖x‖`.
    pub fn backward(z: &[f64], n: f64, dz: &[f64]) -> Vec<f64> {
        let zd = dot(z, dz);
        z.iter().zip(dz).map(|(zi, di)| (di - zi * zd) / n).collect()
    }
}

/// A model whose trainable state is a fixed, ordered list of flat buffers.
/// Gradient structs implement the same trait with the same layout.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Hex SHA-256 over the little-endian bytes of every buffer in order.
    fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for t in self.tensors() {
            for v in t {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub coordinates: usize,
    /// Coordinates whose stencil `[-eps, eps]` straddles a kink of the loss
    /// (a ReLU or hinge switching), where the derivative is not defined by
    /// differences. Detected by the central difference changing between
    /// steps `eps` and `eps / 2`.
    pub kinks: usize,
}

/// Compares `analytic` with central differences of `loss` with step `eps`,
/// over every scalar in `params`.
pub fn gradient_check<P: Parameters + Clone>(
    params: &P,
    analytic: &P,
    eps: f64,
    mut loss: impl FnMut(&P) -> f64,
) -> GradientCheck {
    let mut p = params.clone();
    let grads: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.to_vec()).collect();
    let mut out = GradientCheck {
        max_relative_error: 0.0,
        coordinates: 0,
        kinks: 0,
    };
    let mut central = |p: &mut P, t: usize, i: usize, h: f64| {
        let orig = p.tensors()[t][i];
        p.tensors_mut()[t][i] = orig + h;
        let up = loss(p);
        p.tensors_mut()[t][i] = orig - h;
        let down = loss(p);
        p.tensors_mut()[t][i] = orig;
        (up - down) / (2.0 * h)
    };
    for (t, g) in grads.iter().enumerate() {
        for (i, &a) in g.iter().enumerate() {
            let numeric = central(&mut p, t, i, eps);
            let half = central(&mut p, t, i, eps / 2.0);
            out.coordinates += 1;
            if relative_error(numeric, half) > 1e-5 {
                out.kinks += 1;
            }
            out.max_relative_error = out.max_relative_error.max(relative_error(a, numeric));
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    pub fn new<P: Parameters + ?Sized>(cfg: AdamConfig, params: &P) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        Adam {
            cfg,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn step<P: Parameters + ?Sized>(&mut self, params: &mut P, grads: &P) {
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.t);
        let bc2 = 1.0 - beta2.powi(self.t);
        let grads = grads.tensors();
        for (ti, p) in params.tensors_mut().into_iter().enumerate() {
            let g = grads[ti];
            let m = &mut self.m[ti];
            let v = &mut self.v[ti];
            for j in 0..p.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                p[j] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows, b.cols);
        for i in 0..a.rows {
            for j in 0..b.cols {
                let mut s = 0.0;
                for p in 0..a.cols {
                    s += a.data[i * a.cols + p] * b.data[p * b.cols + j];
                }
                out.data[i * b.cols + j] = s;
            }
        }
        out
    }

    fn transpose(a: &Matrix) -> Matrix {
        let mut t = Matrix::zeros(a.cols, a.rows);
        for i in 0..a.rows {
            for j in 0..a.cols {
                t.data[j * a.rows + i] = a.data[i * a.cols + j];
            }
        }
        t
    }

    fn close(a: &Matrix, b: &Matrix) -> bool {
        a.rows == b.rows
            && a.cols == b.cols
            && a.data.iter().zip(&b.data).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn products_match_naive() {
        let a = Matrix::from_vec(2, 3, vec![1., 2., 3., 4., 5., 6.]);
        let b = Matrix::from_vec(3, 2, vec![7., 8., 9., 10., 11., 12.]);
        let want = naive(&a, &b);
        assert!(close(&matmul_nn(&a, &b), &want));
        assert!(close(&matmul_nt(&a, &transpose(&b)), &want));

        let mut acc = Matrix::from_vec(2, 2, vec![1.0; 4]);
        matmul_tn_acc(&transpose(&a), &b, &mut acc);
        let mut want_acc = want.clone();
        want_acc.data.iter_mut().for_each(|x| *x += 1.0);
        assert!(close(&acc, &want_acc));
    }

    #[test]
    fn matvec_is_row_product() {
        let w = Matrix::from_vec(2, 2, vec![0., 1., 1., 0.]);
        assert_eq!(matvec(&w, &[2.0, -1.0]), vec![-1.0, 2.0]);
    }

    #[test]
    fn l2_backward_matches_finite_difference() {
        let x = [0.3, -1.2, 0.7];
        let dz = [0.5, 0.1, -0.4];
        let (z, n) = l2::normalize(&x);
        let g = l2::backward(&z, n, &dz);
        let f = |x: &[f64]| dot(&l2::normalize(x).0, &dz);
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += 1e-6;
            xm[i] -= 1e-6;
            let fd = (f(&xp) - f(&xm)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }

    struct Quad(Vec<f64>);
    impl Parameters for Quad {
        fn tensors(&self) -> Vec<&[f64]> {
            vec![&self.0]
        }
        fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut p = Quad(vec![3.0, -2.0]);
        let mut opt = Adam::new(
            AdamConfig {
                lr: 0.05,
                ..Default::default()
            },
            &p,
        );
        for _ in 0..2000 {
            let g = Quad(p.0.iter().map(|x| 2.0 * x).collect());
            opt.step(&mut p, &g);
        }
        assert!(p.0.iter().all(|x| x.abs() < 1e-3));
    }
}
