use std::fmt;

use serde::ser::{Serialize, SerializeSeq, Serializer};

use crate::error::{Error, Result};

/// Dense symmetric matrix stored in full row-major form.
///
/// Writes go through [`SymMatrix::set`], which mirrors the entry, so the
/// stored array is always exactly symmetric.
#[derive(Clone, PartialEq)]
pub struct SymMatrix {
    order: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(order: usize) -> Self {
        assert!(order >= 1, "SymMatrix order must be at least 1");
        Self {
            order,
            data: vec![0.0; order * order],
        }
    }

    pub fn identity(order: usize) -> Self {
        let mut s = Self::zeros(order);
        for i in 0..order {
            s.data[i * order + i] = 1.0;
        }
        s
    }

    /// All-ones matrix `J`.
    pub fn ones(order: usize) -> Self {
        assert!(order >= 1, "SymMatrix order must be at least 1");
        Self {
            order,
            data: vec![1.0; order * order],
        }
    }

    /// Builds from row slices; fails unless the input is square and exactly symmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let order = rows.len();
        if order == 0 {
            return Err(Error::InvalidDimension("empty matrix".into()));
        }
        let mut s = Self::zeros(order);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != order {
                return Err(Error::InvalidDimension(format!(
                    "row {i} has {} entries, expected {order}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if j < i && rows[j][i] != v {
                    return Err(Error::InvalidDimension(format!(
                        "entries ({i},{j}) and ({j},{i}) differ"
                    )));
                }
                s.data[i * order + j] = v;
            }
        }
        Ok(s)
    }

    /// Symmetrizes a full row-major array as `(A + Aᵀ)/2`.
    pub fn from_full(order: usize, full: &[f64]) -> Self {
        assert_eq!(full.len(), order * order);
        let mut s = Self::zeros(order);
        for i in 0..order {
            for j in 0..=i {
                let v = 0.5 * (full[i * order + j] + full[j * order + i]);
                s.set(i, j, v);
            }
        }
        s
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.order + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.order + j] = v;
        self.data[j * self.order + i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.order..(i + 1) * self.order]
    }

    pub fn trace(&self) -> f64 {
        (0..self.order).map(|i| self.get(i, i)).sum()
    }

    /// `tr(A²)`, which for symmetric `A` is the squared Frobenius norm.
    pub fn trace_of_square(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            order: self.order,
            data: self.data.iter().map(|v| v * k).collect(),
        }
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &SymMatrix, b: f64) -> Self {
        assert_eq!(self.order, other.order);
        Self {
            order: self.order,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.order);
        (0..self.order)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `xᵀ A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Dense product `self · other` (generally not symmetric).
    pub fn matmul(&self, other: &SymMatrix) -> Vec<f64> {
        let n = self.order;
        assert_eq!(n, other.order);
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        assert_eq!(self.order, other.order);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "SymMatrix({})", self.order)?;
        for i in 0..self.order {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        Ok(())
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.order))?;
        for i in 0..self.order {
            seq.serialize_element(self.row(i))?;
        }
        seq.end()
    }
}

/// General dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `selfᵀ · y`.
    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * yi;
            }
        }
        out
    }

    /// `self · selfᵀ`.
    pub fn gram(&self) -> SymMatrix {
        let mut g = SymMatrix::zeros(self.rows);
        for i in 0..self.rows {
            for j in 0..=i {
                let v = self
                    .row(i)
                    .iter()
                    .zip(self.row(j))
                    .map(|(a, b)| a * b)
                    .sum();
                g.set(i, j, v);
            }
        }
        g
    }

    /// Congruence `self · s · selfᵀ`.
    pub fn congruence(&self, s: &SymMatrix) -> SymMatrix {
        assert_eq!(self.cols, s.order());
        let sc: Vec<Vec<f64>> = (0..self.rows).map(|i| s.mul_vec(self.row(i))).collect();
        let mut out = SymMatrix::zeros(self.rows);
        for i in 0..self.rows {
            for j in 0..=i {
                let v = self.row(i).iter().zip(&sc[j]).map(|(a, b)| a * b).sum();
                out.set(i, j, v);
            }
        }
        out
    }
}

/// Orthonormal within-subject contrasts: `(m−1) × m`, rows orthogonal to the unit vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastMatrix(Matrix);

impl ContrastMatrix {
    /// Wraps an arbitrary basis after checking both contrast invariants to 1e-12.
    pub fn new(basis: Matrix) -> Result<Self> {
        let m = basis.cols();
        if m < 2 || basis.rows() != m - 1 {
            return Err(Error::InvalidDimension(format!(
                "contrast basis must be (m-1) x m, got {} x {m}",
                basis.rows()
            )));
        }
        for i in 0..basis.rows() {
            let s: f64 = basis.row(i).iter().sum();
            if s.abs() > 1e-12 {
                return Err(Error::InvalidDimension(format!(
                    "contrast row {i} sums to {s}"
                )));
            }
        }
        let g = basis.gram();
        if g.max_abs_diff(&SymMatrix::identity(m - 1)) > 1e-12 {
            return Err(Error::InvalidDimension(
                "contrast rows are not orthonormal".into(),
            ));
        }
        Ok(Self(basis))
    }

    pub fn occasions(&self) -> usize {
        self.0.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    /// `C·x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.0.mul_vec(x)
    }

    /// `C·S·Cᵀ`.
    pub fn project(&self, s: &SymMatrix) -> SymMatrix {
        self.0.congruence(s)
    }
}

/// Normalized Helmert contrasts. Row `k` (1-based) weights the first `k`
/// occasions by 1 and occasion `k+1` by `−k`, scaled to unit length.
pub fn helmert_contrasts(m: usize) -> Result<ContrastMatrix> {
    if m < 2 {
        return Err(Error::InvalidDimension(format!(
            "need at least 2 occasions, got {m}"
        )));
    }
    let mut c = Matrix::zeros(m - 1, m);
    for k in 1..m {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for j in 0..k {
            c.set(k - 1, j, 1.0 / norm);
        }
        c.set(k - 1, k, -(k as f64) / norm);
    }
    Ok(ContrastMatrix(c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn helmert_m2_is_normalized_difference() {
        let c = helmert_contrasts(2).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((c.matrix().get(0, 0) - r).abs() < 1e-15);
        assert!((c.matrix().get(0, 1) + r).abs() < 1e-15);
    }

    #[test]
    fn helmert_invariants_hold_up_to_twelve() {
        for m in 2..=12 {
            let c = helmert_contrasts(m).unwrap();
            assert!(c.matrix().gram().max_abs_diff(&SymMatrix::identity(m - 1)) <= 1e-12);
            let annihilated = c.apply(&vec![1.0; m]);
            assert!(annihilated.iter().all(|v| v.abs() <= 1e-12), "m={m}");
            // the checked constructor must accept it too
            ContrastMatrix::new(c.matrix().clone()).unwrap();
        }
    }

    #[test]
    fn helmert_rejects_single_occasion() {
        assert!(matches!(
            helmert_contrasts(1),
            Err(Error::InvalidDimension(_))
        ));
        assert!(matches!(
            helmert_contrasts(0),
            Err(Error::InvalidDimension(_))
        ));
    }

    #[test]
    fn set_mirrors() {
        let mut s = SymMatrix::zeros(3);
        s.set(0, 2, 0.8);
        assert_eq!(s.get(2, 0), 0.8);
    }

    #[test]
    fn from_rows_rejects_asymmetric() {
        let r = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 1.0]]);
        assert!(r.is_err());
    }

    #[test]
    fn congruence_matches_explicit_product() {
        let s = SymMatrix::from_rows(&[
            vec![2.0, 0.5, 0.1],
            vec![0.5, 1.0, 0.3],
            vec![0.1, 0.3, 3.0],
        ])
        .unwrap();
        let c = helmert_contrasts(3).unwrap();
        let p = c.project(&s);
        for i in 0..2 {
            for j in 0..2 {
                let mut v = 0.0;
                for a in 0..3 {
                    for b in 0..3 {
                        v += c.matrix().get(i, a) * s.get(a, b) * c.matrix().get(j, b);
                    }
                }
                assert!((p.get(i, j) - v).abs() < 1e-14);
            }
        }
    }
}
