//! Repeated-measures statistics engine with a Monte Carlo Type I error harness.
//!
//! Five tests of the occasion effect in a one-way within-subjects design:
//! uncorrected repeated-measures ANOVA, its Greenhouse-Geisser and
//! Huynh-Feldt corrections, and REML mixed models with compound-symmetric
//! (MLM-CS) and unstructured (MLM-UN) covariance. [`simengine`] runs them
//! over null populations with and without sphericity.

pub mod cli;
pub mod datagen;
pub mod error;
pub mod io_report;
pub mod mlm;
pub mod numkernel;
pub mod ranova;
pub mod simengine;

pub use error::{Error, Result};
