//! Small dense symmetric linear algebra and the F distribution.
//!
//! Everything here is sized for covariance matrices of a handful of
//! repeated measurements; nothing is blocked or sparse.

mod cholesky;
mod eigen;
mod matrix;
mod special;

pub use cholesky::{cholesky, sym_solve, CholeskyFactor, PIVOT_TOLERANCE};
pub use eigen::sym_eigen;
pub use matrix::{helmert_contrasts, ContrastMatrix, Matrix, SymMatrix};
pub use special::{f_cdf, f_quantile, f_sf, ln_beta, ln_gamma, reg_inc_beta, QUANTILE_MAX_ITER};
