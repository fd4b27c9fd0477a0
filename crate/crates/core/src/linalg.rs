//! Small dense kernels on row-major `p x p` symmetric matrices.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    p: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &[f64], p: usize) -> Result<Self> {
        debug_assert_eq!(a.len(), p * p);
        let mut l = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..=i {
                let mut sum = a[i * p + j];
                for k in 0..j {
                    sum -= l[i * p + k] * l[j * p + k];
                }
                if i == j {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return Err(Error::NotPositiveDefinite);
                    }
                    l[i * p + i] = sum.sqrt();
                } else {
                    l[i * p + j] = sum / l[j * p + j];
                }
            }
        }
        Ok(Cholesky { p, lower: l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let p = self.p;
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..p {
            let mut s = y[i];
            for k in 0..i {
                s -= l[i * p + k] * y[k];
            }
            y[i] = s / l[i * p + i];
        }
        for i in (0..p).rev() {
            let mut s = y[i];
            for k in i + 1..p {
                s -= l[k * p + i] * y[k];
            }
            y[i] = s / l[i * p + i];
        }
        y
    }

    /// Solves `L^T x = z`; with `z ~ N(0, I)` the result has covariance `A^{-1}`.
    pub fn solve_upper(&self, z: &[f64]) -> Vec<f64> {
        let p = self.p;
        let l = &self.lower;
        let mut x = z.to_vec();
        for i in (0..p).rev() {
            let mut s = x[i];
            for k in i + 1..p {
                s -= l[k * p + i] * x[k];
            }
            x[i] = s / l[i * p + i];
        }
        x
    }
}

pub fn cholesky_solve(a: &[f64], p: usize, b: &[f64]) -> Result<Vec<f64>> {
    Ok(Cholesky::factor(a, p)?.solve(b))
}

/// `c^T A c` for row-major symmetric `A`.
pub fn quad_form(a: &[f64], c: &[f64]) -> f64 {
    let p = c.len();
    let mut total = 0.0;
    for i in 0..p {
        let ci = c[i];
        if ci == 0.0 {
            continue;
        }
        let row = &a[i * p..(i + 1) * p];
        let mut s = 0.0;
        for j in 0..p {
            s += row[j] * c[j];
        }
        total += ci * s;
    }
    total
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn trace(a: &[f64], p: usize) -> f64 {
    (0..p).map(|i| a[i * p + i]).sum()
}

/// Numerical rank of a Gram matrix `X^T X`, computed on the unit-diagonal
/// rescaling so columns of very different scale are treated alike.
pub fn gram_rank(xtx: &[f64], p: usize) -> usize {
    let scale: Vec<f64> = (0..p)
        .map(|i| {
            let d = xtx[i * p + i];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    if scale.iter().all(|s| *s == 0.0) {
        return 0;
    }
    let m = DMatrix::from_fn(p, p, |i, j| xtx[i * p + j] * scale[i] * scale[j]);
    let eig = m.symmetric_eigenvalues();
    let max = eig.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let tol = max * p as f64 * 1e-10;
    eig.iter().filter(|&&e| e > tol).count()
}
