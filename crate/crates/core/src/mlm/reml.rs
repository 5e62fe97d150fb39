use super::{check_dims, CovKind, CovStructure};
use crate::datagen::{sample_moments, Dataset};
use crate::error::{Error, Result};
use crate::numkernel::{cholesky, sym_solve, SymMatrix};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100;
const PARAM_TOL: f64 = 1e-8;
const MAX_HALVINGS: usize = 40;

/// −2 × restricted log-likelihood of the saturated-means model.
///
/// With `N = n·m` observations, `p = m` fixed effects, `V = I_n ⊗ Σ` and
/// `W = Σ_i (y_i − ȳ)(y_i − ȳ)ᵀ`, the usual
/// `(N−p)·log 2π + log|V| + log|XᵀV⁻¹X| + rᵀV⁻¹r` reduces to
///
/// `(n−1)·log|Σ| + tr(Σ⁻¹W) + m·log n + (n−1)·m·log 2π`.
///
/// The `−log|XᵀX|` term some programs add is not included.
pub fn reml_deviance(d: &Dataset, structure: &CovStructure) -> Result<f64> {
    let (n, m) = (d.n(), d.m());
    let sigma = structure.implied(m);
    let (_, cov) = sample_moments(d)?;
    deviance_from_moments(&sigma, &cov, n)
}

/// Same objective, from the sample covariance `S = W/(n−1)`.
pub(crate) fn deviance_from_moments(sigma: &SymMatrix, s: &SymMatrix, n: usize) -> Result<f64> {
    let m = sigma.order();
    let factor =
        cholesky(sigma).map_err(|e| Error::SingularCovariance(format!("model covariance: {e}")))?;
    let inv = factor.inverse();
    let nf = (n - 1) as f64;
    // tr(Σ⁻¹ W) = (n−1)·Σ_ij (Σ⁻¹)_ij S_ij for symmetric matrices
    let tr: f64 = inv
        .as_slice()
        .iter()
        .zip(s.as_slice())
        .map(|(a, b)| a * b)
        .sum::<f64>()
        * nf;
    Ok(nf * factor.log_det()
        + tr
        + m as f64 * (n as f64).ln()
        + nf * m as f64 * (2.0 * std::f64::consts::PI).ln())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoringFit {
    pub structure: CovStructure,
    pub deviance: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Linear covariance parametrization `Σ(θ) = Σ_k θ_k·E_k`.
struct Basis {
    kind: CovKind,
    m: usize,
    mats: Vec<SymMatrix>,
}

impl Basis {
    fn new(kind: CovKind, m: usize) -> Self {
        let mats = match kind {
            CovKind::Cs => vec![SymMatrix::identity(m), SymMatrix::ones(m)],
            CovKind::Un => {
                let mut v = Vec::with_capacity(m * (m + 1) / 2);
                for i in 0..m {
                    for j in 0..=i {
                        let mut e = SymMatrix::zeros(m);
                        e.set(i, j, 1.0);
                        v.push(e);
                    }
                }
                v
            }
        };
        Self { kind, m, mats }
    }

    fn sigma(&self, theta: &[f64]) -> SymMatrix {
        let mut s = SymMatrix::zeros(self.m);
        for (t, e) in theta.iter().zip(&self.mats) {
            s = s.combine(1.0, e, *t);
        }
        s
    }

    fn start(&self, s: &SymMatrix) -> Vec<f64> {
        match self.kind {
            CovKind::Cs => vec![s.trace() / self.m as f64, 0.0],
            CovKind::Un => {
                let mut t = Vec::with_capacity(self.mats.len());
                for i in 0..self.m {
                    for j in 0..=i {
                        t.push(if i == j { s.get(i, i) } else { 0.0 });
                    }
                }
                t
            }
        }
    }

    fn structure(&self, theta: &[f64]) -> CovStructure {
        match self.kind {
            CovKind::Cs => CovStructure::CompoundSymmetry {
                sigma2: theta[0],
                sigma_b2: theta[1],
            },
            CovKind::Un => CovStructure::Unstructured {
                sigma: self.sigma(theta),
            },
        }
    }
}

/// Fisher scoring on the REML deviance.
///
/// Each step solves `H·Δ = −g` with gradient
/// `g_k = (n−1)·tr(Σ⁻¹E_k) − tr(Σ⁻¹WΣ⁻¹E_k)` and expected Hessian
/// `H_kl = (n−1)·tr(Σ⁻¹E_kΣ⁻¹E_l)`, halving the step until `Σ` stays positive
/// definite and the deviance does not rise. Stops when the relative deviance
/// change drops below `tol` or no parameter moves by more than 1e-8.
pub fn fisher_scoring_reml(
    d: &Dataset,
    kind: CovKind,
    tol: f64,
    max_iter: usize,
) -> Result<ScoringFit> {
    check_dims(d, kind)?;
    let (n, m) = (d.n(), d.m());
    let (_, s) = sample_moments(d)?;
    let basis = Basis::new(kind, m);
    let mut theta = basis.start(&s);
    let nf = (n - 1) as f64;

    let mut dev = deviance_from_moments(&basis.sigma(&theta), &s, n)?;
    for iter in 1..=max_iter {
        let sigma = basis.sigma(&theta);
        let inv = cholesky(&sigma)
            .map_err(|e| Error::SingularCovariance(format!("scoring iterate: {e}")))?
            .inverse();
        // Σ⁻¹ W Σ⁻¹ with W = (n−1)S
        let q = SymMatrix::from_full(
            m,
            &mul_full(
                &mul_full(inv.as_slice(), s.as_slice(), m),
                inv.as_slice(),
                m,
            ),
        )
        .scaled(nf);
        let pe: Vec<Vec<f64>> = basis
            .mats
            .iter()
            .map(|e| mul_full(inv.as_slice(), e.as_slice(), m))
            .collect();

        let k = basis.mats.len();
        let grad: Vec<f64> = basis
            .mats
            .iter()
            .zip(&pe)
            .map(|(e, pek)| nf * trace_full(pek, m) - frob(&q, e))
            .collect();
        let mut hess = SymMatrix::zeros(k);
        for a in 0..k {
            for b in 0..=a {
                hess.set(a, b, nf * trace_prod(&pe[a], &pe[b], m));
            }
        }
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        let step = sym_solve(&hess, &neg)
            .map_err(|e| Error::SingularCovariance(format!("scoring information matrix: {e}")))?;

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, b)| a + t * b).collect();
            if let Ok(new_dev) = deviance_from_moments(&basis.sigma(&cand), &s, n) {
                if new_dev <= dev + 1e-12 * dev.abs().max(1.0) {
                    accepted = Some((cand, new_dev));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((cand, new_dev)) = accepted else {
            return Err(Error::SingularCovariance(
                "step halving exhausted without improvement".into(),
            ));
        };
        let max_move = step.iter().fold(0.0f64, |acc, v| acc.max((t * v).abs()));
        let rel_change = (dev - new_dev).abs() / dev.abs().max(1.0);
        theta = cand;
        dev = new_dev;
        if rel_change < tol || max_move < PARAM_TOL {
            return Ok(ScoringFit {
                structure: basis.structure(&theta),
                deviance: dev,
                iterations: iter,
                converged: true,
            });
        }
    }
    Err(Error::NoConvergence {
        what: "REML Fisher scoring".into(),
        iterations: max_iter,
    })
}

fn mul_full(a: &[f64], b: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for k in 0..m {
            let aik = a[i * m + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..m {
                out[i * m + j] += aik * b[k * m + j];
            }
        }
    }
    out
}

fn trace_full(a: &[f64], m: usize) -> f64 {
    (0..m).map(|i| a[i * m + i]).sum()
}

/// `tr(A·B)` for full row-major `A`, `B`.
fn trace_prod(a: &[f64], b: &[f64], m: usize) -> f64 {
    let mut t = 0.0;
    for i in 0..m {
        for j in 0..m {
            t += a[i * m + j] * b[j * m + i];
        }
    }
    t
}

/// `tr(A·B)` for symmetric `A`, `B`.
fn frob(a: &SymMatrix, b: &SymMatrix) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x * y)
        .sum()
}
