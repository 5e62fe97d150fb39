use super::matrix::SymMatrix;
use crate::error::{Error, Result};

/// Pivots at or below this value declare the matrix not positive definite.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Lower-triangular factor `L` with `L·Lᵀ = A`.
#[derive(Clone, Debug, PartialEq)]
pub struct CholeskyFactor {
    order: usize,
    lower: Vec<f64>,
}

pub fn cholesky(a: &SymMatrix) -> Result<CholeskyFactor> {
    let n = a.order();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > PIVOT_TOLERANCE) {
                    return Err(Error::NotPositiveDefinite { index: i, pivot: s });
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(CholeskyFactor { order: n, lower: l })
}

/// Solves `a·x = b` for positive-definite `a`.
pub fn sym_solve(a: &SymMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.order() {
        return Err(Error::InvalidDimension(format!(
            "right-hand side has length {}, matrix order is {}",
            b.len(),
            a.order()
        )));
    }
    Ok(cholesky(a)?.solve(b))
}

impl CholeskyFactor {
    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.order + j]
    }

    /// `L·z`, the map that turns independent standard normals into draws
    /// with covariance `A`.
    pub fn lower_mul(&self, z: &[f64], out: &mut [f64]) {
        let n = self.order;
        for i in 0..n {
            let row = &self.lower[i * n..i * n + i + 1];
            out[i] = row.iter().zip(z).map(|(a, b)| a * b).sum();
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.order;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.lower[i * n + k] * y[k];
            }
            y[i] = s / self.lower[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.lower[k * n + i] * y[k];
            }
            y[i] = s / self.lower[i * n + i];
        }
        y
    }

    pub fn log_det(&self) -> f64 {
        (0..self.order).map(|i| 2.0 * self.get(i, i).ln()).sum()
    }

    pub fn inverse(&self) -> SymMatrix {
        let n = self.order;
        let mut inv = SymMatrix::zeros(n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for (i, &v) in col.iter().enumerate().take(j + 1) {
                inv.set(i, j, v);
            }
        }
        inv
    }

    /// `L·Lᵀ`.
    pub fn reconstruct(&self) -> SymMatrix {
        let n = self.order;
        let mut a = SymMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let v = (0..=j).map(|k| self.get(i, k) * self.get(j, k)).sum();
                a.set(i, j, v);
            }
        }
        a
    }
}
