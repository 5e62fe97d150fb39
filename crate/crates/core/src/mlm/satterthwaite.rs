//! Multi-degree-of-freedom Satterthwaite denominator df (Fai–Cornelius form).
//!
//! The contrast covariance `K = C·(Σ̂/n)·Cᵀ` is decomposed as `U·Λ·Uᵀ`. Each
//! eigenvalue `λ_l = w_lᵀΣ̂w_l / n` with `w_l = Cᵀu_l` gets its own
//! `ν_l = 2λ_l² / Var̂(λ̂_l)`, where the variance comes from the delta method
//! and the closed-form sampling covariance of the REML estimates. The pieces
//! combine as `E = Σ_{ν_l>2} ν_l/(ν_l−2)` and `ddf = 2E/(E−q)`.

use super::{check_dims, closed_form_structure, CovKind, CovStructure, CsMode};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::numkernel::{helmert_contrasts, sym_eigen, ContrastMatrix};

pub fn satterthwaite_ddf(d: &Dataset, kind: CovKind) -> Result<f64> {
    check_dims(d, kind)?;
    let structure = closed_form_structure(d, kind, CsMode::Unconstrained)?;
    let contrasts = helmert_contrasts(d.m())?;
    ddf_for_structure(&structure, d.n(), d.m(), &contrasts, CsMode::Unconstrained)
}

/// Estimated `Var(wᵀΣ̂w)` for a fixed weight vector `w`.
///
/// UN: `Cov(s_ij, s_kl) = (σ_ik·σ_jl + σ_il·σ_jk)/(n−1)`; contracting with
/// `w_i w_j w_k w_l` gives `2(wᵀΣw)²/(n−1)`.
///
/// CS: with `a = wᵀw` and `b = (1ᵀw)²`, `wᵀΣw = a·σ² + b·σ_b²`. The REML
/// estimates are `σ̂² = MS_E` and `σ̂_b² = (MS_S − MS_E)/m`, where
/// `Var(MS_E) = 2σ⁴/((n−1)(m−1))` and `Var(MS_S) = 2(σ² + mσ_b²)²/(n−1)`.
/// A truncated fit (`σ_b² = 0` on the boundary) treats `σ_b²` as fixed and
/// `σ̂²` as pooled over `(n−1)·m` df.
pub(crate) fn quad_form_variance(
    structure: &CovStructure,
    w: &[f64],
    n: usize,
    cs_mode: CsMode,
) -> f64 {
    let nf = (n - 1) as f64;
    match structure {
        CovStructure::Unstructured { sigma } => {
            let v = sigma.quad_form(w);
            2.0 * v * v / nf
        }
        CovStructure::CompoundSymmetry { sigma2, sigma_b2 } => {
            let m = w.len() as f64;
            let a: f64 = w.iter().map(|x| x * x).sum();
            let b: f64 = w.iter().sum::<f64>().powi(2);
            if cs_mode == CsMode::Truncated && *sigma_b2 == 0.0 {
                let df = nf * m;
                return a * a * 2.0 * sigma2 * sigma2 / df;
            }
            let df_e = nf * (m - 1.0);
            let var_mse = 2.0 * sigma2 * sigma2 / df_e;
            let ms_s = sigma2 + m * sigma_b2;
            let var_mss = 2.0 * ms_s * ms_s / nf;
            let var_b = (var_mss + var_mse) / (m * m);
            let cov_ab = -var_mse / m;
            a * a * var_mse + b * b * var_b + 2.0 * a * b * cov_ab
        }
    }
}

pub(crate) fn ddf_for_structure(
    structure: &CovStructure,
    n: usize,
    m: usize,
    contrasts: &ContrastMatrix,
    cs_mode: CsMode,
) -> Result<f64> {
    let q = (m - 1) as f64;
    let sigma = structure.implied(m);
    let k = contrasts.project(&sigma).scaled(1.0 / n as f64);
    let (_, vectors) = sym_eigen(&k)?;

    let mut e_sum = 0.0;
    for l in 0..m - 1 {
        let u = vectors.column(l);
        let w = contrasts.matrix().tr_mul_vec(&u);
        let lambda = sigma.quad_form(&w) / n as f64;
        if !(lambda > 0.0) {
            return Err(Error::SingularCovariance(format!(
                "contrast variance component {l} is {lambda}"
            )));
        }
        let var = quad_form_variance(structure, &w, n, cs_mode) / (n as f64 * n as f64);
        let nu = 2.0 * lambda * lambda / var;
        if nu > 2.0 {
            e_sum += nu / (nu - 2.0);
        }
    }
    if e_sum > q {
        Ok(2.0 * e_sum / (e_sum - q))
    } else {
        Ok(((n - 1) * (m - 1)) as f64)
    }
}
