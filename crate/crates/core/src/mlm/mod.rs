//! REML mixed models for balanced repeated measures.
//!
//! The model is `y_i ~ N(μ, Σ)` for subjects `i = 1..n`, with a saturated
//! mean vector `μ` (one fixed effect per occasion) and `Σ` either compound
//! symmetric (`σ²·I + σ_b²·J`) or unstructured. The occasion effect is
//! tested with a Wald F on orthonormal contrasts of the estimated means.
//!
//! For complete balanced data both REML optima have closed forms, which are
//! the production path. [`fisher_scoring_reml`] reaches the same optima
//! iteratively and is used to cross-check them.

mod reml;
mod satterthwaite;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::datagen::{sample_moments, Dataset};
use crate::error::{Error, Result};
use crate::numkernel::{f_sf, helmert_contrasts, sym_solve, ContrastMatrix, SymMatrix};
use crate::ranova::{sums_of_squares, DEGENERATE_SS};

pub use reml::{fisher_scoring_reml, reml_deviance, ScoringFit, DEFAULT_MAX_ITER, DEFAULT_TOL};
pub use satterthwaite::satterthwaite_ddf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum CovKind {
    #[serde(rename = "CS")]
    Cs,
    #[serde(rename = "UN")]
    Un,
}

/// Denominator degrees-of-freedom rule for the Wald F.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DdfMethod {
    /// `(n−1)(m−1)`.
    BetweenWithin,
    /// `n·m − m`.
    Residual,
    /// Multi-df Satterthwaite (Fai–Cornelius) approximation.
    Satterthwaite,
}

impl DdfMethod {
    pub const ALL: [DdfMethod; 3] = [
        DdfMethod::BetweenWithin,
        DdfMethod::Residual,
        DdfMethod::Satterthwaite,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DdfMethod::BetweenWithin => "between-within",
            DdfMethod::Residual => "residual",
            DdfMethod::Satterthwaite => "satterthwaite",
        }
    }
}

impl fmt::Display for DdfMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DdfMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "between-within" | "betweenwithin" | "bw" => Ok(DdfMethod::BetweenWithin),
            "residual" => Ok(DdfMethod::Residual),
            "satterthwaite" => Ok(DdfMethod::Satterthwaite),
            other => Err(format!(
                "unknown ddf method '{other}' (expected between-within, residual or satterthwaite)"
            )),
        }
    }
}

/// Whether the CS subject variance may go negative.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CsMode {
    Unconstrained,
    /// `σ_b²` clamped at 0; `σ²` then re-estimated from the pooled within-occasion residuals.
    Truncated,
}

impl CsMode {
    pub fn label(self) -> &'static str {
        match self {
            CsMode::Unconstrained => "unconstrained",
            CsMode::Truncated => "truncated",
        }
    }
}

impl fmt::Display for CsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CsMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "unconstrained" => Ok(CsMode::Unconstrained),
            "truncated" => Ok(CsMode::Truncated),
            other => Err(format!(
                "unknown cs mode '{other}' (expected unconstrained or truncated)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum CovStructure {
    #[serde(rename = "CS")]
    CompoundSymmetry { sigma2: f64, sigma_b2: f64 },
    #[serde(rename = "UN")]
    Unstructured { sigma: SymMatrix },
}

impl CovStructure {
    pub fn kind(&self) -> CovKind {
        match self {
            CovStructure::CompoundSymmetry { .. } => CovKind::Cs,
            CovStructure::Unstructured { .. } => CovKind::Un,
        }
    }

    /// Marginal covariance of one subject's `m` responses.
    pub fn implied(&self, m: usize) -> SymMatrix {
        match self {
            CovStructure::CompoundSymmetry { sigma2, sigma_b2 } => {
                SymMatrix::identity(m).combine(*sigma2, &SymMatrix::ones(m), *sigma_b2)
            }
            CovStructure::Unstructured { sigma } => {
                assert_eq!(
                    sigma.order(),
                    m,
                    "unstructured covariance has the wrong order"
                );
                sigma.clone()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MlmResult {
    pub structure: CovStructure,
    pub reml_deviance: f64,
    pub f_value: f64,
    pub df_num: f64,
    pub df_den: f64,
    pub ddf_method: DdfMethod,
    pub p_value: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitPath {
    ClosedForm,
    /// Fisher scoring from a neutral start; slower, used for validation.
    Iterative,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlmOptions {
    pub ddf: DdfMethod,
    pub cs_mode: CsMode,
    pub path: FitPath,
}

impl Default for MlmOptions {
    fn default() -> Self {
        Self {
            ddf: DdfMethod::Satterthwaite,
            cs_mode: CsMode::Unconstrained,
            path: FitPath::ClosedForm,
        }
    }
}

pub(crate) fn check_dims(d: &Dataset, kind: CovKind) -> Result<()> {
    let (n, m) = (d.n(), d.m());
    if m < 2 {
        return Err(Error::InvalidDimension(format!(
            "need at least 2 occasions, got {m}"
        )));
    }
    match kind {
        CovKind::Un if n <= m => Err(Error::SingularCovariance(format!(
            "unstructured covariance needs more subjects than occasions (n={n}, m={m})"
        ))),
        CovKind::Cs if n < 3 => Err(Error::InvalidDimension(format!(
            "compound symmetry needs n >= 3, got {n}"
        ))),
        _ => Ok(()),
    }
}

/// Closed-form REML estimate for balanced complete data.
pub(crate) fn closed_form_structure(
    d: &Dataset,
    kind: CovKind,
    cs_mode: CsMode,
) -> Result<CovStructure> {
    let (n, m) = (d.n() as f64, d.m() as f64);
    match kind {
        CovKind::Un => {
            let (_, s) = sample_moments(d)?;
            Ok(CovStructure::Unstructured { sigma: s })
        }
        CovKind::Cs => {
            let ss = sums_of_squares(d);
            if ss.error <= DEGENERATE_SS {
                return Err(Error::SingularCovariance(
                    "residual variance is zero; the data are additive in subject and occasion"
                        .into(),
                ));
            }
            let ms_error = ss.error / ((n - 1.0) * (m - 1.0));
            let ms_subject = ss.subject / (n - 1.0);
            let sigma_b2 = (ms_subject - ms_error) / m;
            Ok(truncate_cs(
                ss.subject, ss.error, n, m, ms_error, sigma_b2, cs_mode,
            ))
        }
    }
}

pub(crate) fn truncate_cs(
    ss_subject: f64,
    ss_error: f64,
    n: f64,
    m: f64,
    sigma2: f64,
    sigma_b2: f64,
    cs_mode: CsMode,
) -> CovStructure {
    if cs_mode == CsMode::Truncated && sigma_b2 < 0.0 {
        CovStructure::CompoundSymmetry {
            sigma2: (ss_subject + ss_error) / ((n - 1.0) * m),
            sigma_b2: 0.0,
        }
    } else {
        CovStructure::CompoundSymmetry { sigma2, sigma_b2 }
    }
}

/// `(C·ȳ)ᵀ [C·(Σ/n)·Cᵀ]⁻¹ (C·ȳ) / (m−1)`.
pub fn wald_f(
    means: &[f64],
    sigma: &SymMatrix,
    n: usize,
    contrasts: &ContrastMatrix,
) -> Result<f64> {
    let m = means.len();
    let cy = contrasts.apply(means);
    let k = contrasts.project(sigma).scaled(1.0 / n as f64);
    let x = sym_solve(&k, &cy)
        .map_err(|e| Error::SingularCovariance(format!("contrast covariance: {e}")))?;
    let quad: f64 = cy.iter().zip(&x).map(|(a, b)| a * b).sum();
    Ok(quad.max(0.0) / (m - 1) as f64)
}

pub fn fit_mlm(d: &Dataset, kind: CovKind, ddf: DdfMethod, cs_mode: CsMode) -> Result<MlmResult> {
    fit_mlm_with(
        d,
        kind,
        &MlmOptions {
            ddf,
            cs_mode,
            path: FitPath::ClosedForm,
        },
    )
}

pub fn fit_mlm_with(d: &Dataset, kind: CovKind, opts: &MlmOptions) -> Result<MlmResult> {
    check_dims(d, kind)?;
    let (n, m) = (d.n(), d.m());

    let (structure, converged, iterations) = match opts.path {
        FitPath::ClosedForm => (closed_form_structure(d, kind, opts.cs_mode)?, true, 0),
        FitPath::Iterative => {
            let fit = fisher_scoring_reml(d, kind, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
            let structure = match fit.structure {
                CovStructure::CompoundSymmetry { sigma2, sigma_b2 } => {
                    let ss = sums_of_squares(d);
                    truncate_cs(
                        ss.subject,
                        ss.error,
                        n as f64,
                        m as f64,
                        sigma2,
                        sigma_b2,
                        opts.cs_mode,
                    )
                }
                un => un,
            };
            (structure, fit.converged, fit.iterations)
        }
    };

    let sigma = structure.implied(m);
    let deviance = reml_deviance(d, &structure)?;
    let (means, _) = sample_moments(d)?;
    let contrasts = helmert_contrasts(m)?;
    let f_value = wald_f(&means, &sigma, n, &contrasts)?;

    let df_num = (m - 1) as f64;
    let df_den = match opts.ddf {
        DdfMethod::BetweenWithin => ((n - 1) * (m - 1)) as f64,
        DdfMethod::Residual => (n * m - m) as f64,
        DdfMethod::Satterthwaite => {
            satterthwaite::ddf_for_structure(&structure, n, m, &contrasts, opts.cs_mode)?
        }
    };
    let p_value = f_sf(f_value, df_num, df_den)?;

    Ok(MlmResult {
        structure,
        reml_deviance: deviance,
        f_value,
        df_num,
        df_den,
        ddf_method: opts.ddf,
        p_value,
        converged,
        iterations,
    })
}
