use super::matrix::{Matrix, SymMatrix};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Spectral decomposition of a small symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching unit eigenvectors
/// as the columns of the returned matrix.
pub fn sym_eigen(a: &SymMatrix) -> Result<(Vec<f64>, Matrix)> {
    let n = a.order();
    let mut w: Vec<f64> = a.as_slice().to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = a.max_abs().max(f64::MIN_POSITIVE);

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| w[i * n + j] * w[i * n + j])
            .sum();
        if off.sqrt() <= 1e-15 * scale * n as f64 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = w[p * n + q];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let app = w[p * n + p];
                let aqq = w[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = w[k * n + p];
                    let akq = w[k * n + q];
                    w[k * n + p] = c * akp - s * akq;
                    w[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = w[p * n + k];
                    let aqk = w[q * n + k];
                    w[p * n + k] = c * apk - s * aqk;
                    w[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            what: "Jacobi eigen sweep".into(),
            iterations: MAX_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[i * n + i].total_cmp(&w[j * n + j]));
    let values = order.iter().map(|&i| w[i * n + i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(k, col, v[k * n + src]);
        }
    }
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_input() {
        let mut a = SymMatrix::zeros(3);
        a.set(0, 0, 3.0);
        a.set(1, 1, 1.0);
        a.set(2, 2, 2.0);
        let (vals, _) = sym_eigen(&a).unwrap();
        assert_eq!(vals, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn reconstructs_input() {
        let a = SymMatrix::from_rows(&[
            vec![4.0, 1.0, -2.0, 0.5],
            vec![1.0, 3.0, 0.0, 0.2],
            vec![-2.0, 0.0, 5.0, 1.0],
            vec![0.5, 0.2, 1.0, 2.0],
        ])
        .unwrap();
        let (vals, vecs) = sym_eigen(&a).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let r: f64 = (0..4)
                    .map(|k| vecs.get(i, k) * vals[k] * vecs.get(j, k))
                    .sum();
                assert!((r - a.get(i, j)).abs() < 1e-12);
            }
        }
        assert!(vecs.gram().max_abs_diff(&SymMatrix::identity(4)) < 1e-12);
    }

    #[test]
    fn a_plus_b_j_spectrum() {
        // 0.2 I + 0.8 J of order 5: eigenvalues 0.2 (x4) and 4.2
        let a = SymMatrix::identity(5).combine(0.2, &SymMatrix::ones(5), 0.8);
        let (vals, _) = sym_eigen(&a).unwrap();
        for v in &vals[..4] {
            assert!((v - 0.2).abs() < 1e-12);
        }
        assert!((vals[4] - 4.2).abs() < 1e-12);
    }
}
