//! Dense square matrices just large enough for the Gaussian-mixture code:
//! Cholesky factorization, solves, inverses and log-determinants.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Smallest Cholesky pivot (diagonal of L) accepted as positive definite.
pub const PIVOT_THRESHOLD: f64 = 1e-10;

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Wraps a row-major buffer of length `dim * dim`.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::usage(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        let mut m = Self::identity(dim);
        m.scale(scale);
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|v| *v *= c);
    }

    /// `self += c · u uᵀ`
    pub fn add_outer(&mut self, c: f64, u: &[f64]) {
        debug_assert_eq!(u.len(), self.dim);
        for i in 0..self.dim {
            let ci = c * u[i];
            let row = &mut self.data[i * self.dim..(i + 1) * self.dim];
            for (r, &uj) in row.iter_mut().zip(u) {
                *r += ci * uj;
            }
        }
    }

    /// Replaces the matrix with its symmetric part (A + Aᵀ)/2.
    pub fn symmetrize(&mut self) {
        let n = self.dim;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = v;
                self.data[j * n + i] = v;
            }
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.data.chunks_exact(self.dim).map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    /// Cholesky factor of the lower triangle; fails when a pivot drops
    /// below [`PIVOT_THRESHOLD`].
    pub fn cholesky(&self) -> Result<Cholesky> {
        let n = self.dim;
        let mut l = vec![0.0; n * n];
        let mut min_pivot = f64::INFINITY;
        for j in 0..n {
            let mut d = self.data[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) || d.sqrt() < PIVOT_THRESHOLD {
                return Err(Error::domain(format!("matrix is not positive definite (pivot {j} = {d:e})")));
            }
            let pivot = d.sqrt();
            min_pivot = min_pivot.min(pivot);
            l[j * n + j] = pivot;
            for i in (j + 1)..n {
                let mut s = self.data[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / pivot;
            }
        }
        Ok(Cholesky { dim: n, lower: l, min_pivot })
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
    min_pivot: f64,
}

impl Cholesky {
    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim).map(|i| self.lower[i * self.dim + i].ln()).sum::<f64>()
    }

    /// Solves `L y = b`.
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut y = b.to_vec();
        for i in 0..n {
            let s: f64 = y[i] - (0..i).map(|k| self.lower[i * n + k] * y[k]).sum::<f64>();
            y[i] = s / self.lower[i * n + i];
        }
        y
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut x = self.forward(b);
        for i in (0..n).rev() {
            let s: f64 = x[i] - ((i + 1)..n).map(|k| self.lower[k * n + i] * x[k]).sum::<f64>();
            x[i] = s / self.lower[i * n + i];
        }
        x
    }

    /// `bᵀ A⁻¹ b`
    pub fn quad_inv(&self, b: &[f64]) -> f64 {
        self.forward(b).iter().map(|v| v * v).sum()
    }

    pub fn inverse(&self) -> Matrix {
        let n = self.dim;
        let mut inv = Matrix::zeros(n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv.symmetrize();
        inv
    }

    /// `L z`, used to draw correlated normals.
    pub fn lower_mul(&self, z: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n).map(|i| (0..=i).map(|k| self.lower[i * n + k] * z[k]).sum()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd() -> Matrix {
        Matrix::from_row_major(3, vec![4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]).unwrap()
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = spd();
        let c = a.cholesky().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| c.lower[i * 3 + k] * c.lower[j * 3 + k]).sum();
                assert!((v - a[(i, j)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn inverse_and_solve_agree() {
        let a = spd();
        let c = a.cholesky().unwrap();
        let inv = c.inverse();
        let b = [1.0, -2.0, 0.5];
        let x = c.solve(&b);
        let y = inv.mul_vec(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-14);
        }
        let back = a.mul_vec(&x);
        for (u, v) in back.iter().zip(&b) {
            assert!((u - v).abs() < 1e-13);
        }
        let quad: f64 = b.iter().zip(&x).map(|(u, v)| u * v).sum();
        assert!((c.quad_inv(&b) - quad).abs() < 1e-13);
    }

    #[test]
    fn log_det_of_diagonal() {
        let mut a = Matrix::identity(3);
        a[(0, 0)] = 2.0;
        a[(2, 2)] = 5.0;
        assert!((a.cholesky().unwrap().log_det() - 10f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn rejects_indefinite() {
        let a = Matrix::from_row_major(2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(a.cholesky(), Err(Error::Domain(_))));
        let singular = Matrix::from_row_major(2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(singular.cholesky().is_err());
    }
}
