//! One-way repeated-measures ANOVA with Greenhouse-Geisser and Huynh-Feldt corrections.

use serde::Serialize;

use crate::datagen::{sample_moments, Dataset};
use crate::error::{Error, Result};
use crate::numkernel::{f_sf, helmert_contrasts, ContrastMatrix, SymMatrix};

/// `ss_error` at or below this is treated as perfectly additive data.
pub const DEGENERATE_SS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnovaResult {
    pub n: usize,
    pub m: usize,
    pub ss_occasion: f64,
    pub ss_subject: f64,
    pub ss_error: f64,
    pub df_occasion: f64,
    pub df_subject: f64,
    pub df_error: f64,
    pub f_value: f64,
    pub eps_gg: f64,
    pub eps_hf: f64,
    pub p_uncorrected: f64,
    pub p_gg: f64,
    pub p_hf: f64,
}

impl AnovaResult {
    pub fn ms_error(&self) -> f64 {
        self.ss_error / self.df_error
    }

    pub fn ms_subject(&self) -> f64 {
        self.ss_subject / self.df_subject
    }
}

/// Additive subjects × occasions decomposition of a balanced dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct SumsOfSquares {
    pub occasion: f64,
    pub subject: f64,
    pub error: f64,
}

pub(crate) fn sums_of_squares(d: &Dataset) -> SumsOfSquares {
    let (n, m) = (d.n(), d.m());
    let mut col_mean = vec![0.0; m];
    let mut row_mean = vec![0.0; n];
    for (i, row) in d.rows().enumerate() {
        row_mean[i] = row.iter().sum::<f64>() / m as f64;
        for (c, v) in col_mean.iter_mut().zip(row) {
            *c += v;
        }
    }
    col_mean.iter_mut().for_each(|c| *c /= n as f64);
    let grand = col_mean.iter().sum::<f64>() / m as f64;

    let occasion = n as f64 * col_mean.iter().map(|c| (c - grand).powi(2)).sum::<f64>();
    let subject = m as f64 * row_mean.iter().map(|r| (r - grand).powi(2)).sum::<f64>();
    let mut error = 0.0;
    for (row, rm) in d.rows().zip(&row_mean) {
        for (v, cm) in row.iter().zip(&col_mean) {
            error += (v - rm - cm + grand).powi(2);
        }
    }
    SumsOfSquares {
        occasion,
        subject,
        error,
    }
}

pub fn fit_ranova(d: &Dataset) -> Result<AnovaResult> {
    let (n, m) = (d.n(), d.m());
    if n < 2 || m < 2 {
        return Err(Error::InvalidDimension(format!(
            "need n >= 2 and m >= 2, got n={n}, m={m}"
        )));
    }
    let ss = sums_of_squares(d);
    if ss.error <= DEGENERATE_SS {
        return Err(Error::DegenerateData(format!(
            "error sum of squares is {:.3e}; the data are additive in subject and occasion",
            ss.error
        )));
    }
    let df_occasion = (m - 1) as f64;
    let df_subject = (n - 1) as f64;
    let df_error = df_subject * df_occasion;
    let f_value = (ss.occasion / df_occasion) / (ss.error / df_error);

    let (_, cov) = sample_moments(d)?;
    let contrasts = helmert_contrasts(m)?;
    let eps_gg = gg_epsilon(&cov, &contrasts)?;
    let eps_hf = hf_epsilon(eps_gg, n, m)?;

    Ok(AnovaResult {
        n,
        m,
        ss_occasion: ss.occasion,
        ss_subject: ss.subject,
        ss_error: ss.error,
        df_occasion,
        df_subject,
        df_error,
        f_value,
        eps_gg,
        eps_hf,
        p_uncorrected: f_sf(f_value, df_occasion, df_error)?,
        p_gg: f_sf(f_value, eps_gg * df_occasion, eps_gg * df_error)?,
        p_hf: f_sf(f_value, eps_hf * df_occasion, eps_hf * df_error)?,
    })
}

/// Box/Greenhouse-Geisser epsilon `tr(M)² / ((m−1)·tr(M²))` with `M = C·S·Cᵀ`.
pub fn gg_epsilon(s: &SymMatrix, c: &ContrastMatrix) -> Result<f64> {
    let m = s.order();
    if m < 2 || c.occasions() != m {
        return Err(Error::InvalidDimension(format!(
            "covariance of order {m} does not match contrasts over {} occasions",
            c.occasions()
        )));
    }
    let proj = c.project(s);
    let tr = proj.trace();
    let tr_sq = proj.trace_of_square();
    if tr_sq <= 1e-14 {
        return Err(Error::DegenerateData(
            "contrast covariance is numerically zero".into(),
        ));
    }
    let q = (m - 1) as f64;
    Ok((tr * tr / (q * tr_sq)).clamp(1.0 / q, 1.0))
}

/// Huynh-Feldt epsilon for a single-group design, capped at 1.
pub fn hf_epsilon(eps_gg: f64, n: usize, m: usize) -> Result<f64> {
    if n < 2 || m < 2 {
        return Err(Error::InvalidDimension(format!(
            "need n >= 2 and m >= 2, got n={n}, m={m}"
        )));
    }
    let q = (m - 1) as f64;
    if !(eps_gg >= 1.0 / q - 1e-12 && eps_gg <= 1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "GG epsilon {eps_gg} outside [1/(m-1), 1]"
        )));
    }
    let n = n as f64;
    let denom = q * (n - 1.0 - q * eps_gg);
    if denom <= 0.0 {
        return Err(Error::DegenerateData(format!(
            "Huynh-Feldt denominator is {denom} (too few subjects for {} occasions)",
            m
        )));
    }
    Ok(((n * q * eps_gg - 2.0) / denom).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked() -> Dataset {
        Dataset::from_rows(&[
            vec![1.0, 2.0, 4.0],
            vec![2.0, 3.0, 3.0],
            vec![3.0, 5.0, 4.0],
        ])
        .unwrap()
    }

    /// Direct double-loop sums, written independently of `sums_of_squares`.
    fn naive_ss(rows: &[Vec<f64>]) -> (f64, f64, f64, f64) {
        let n = rows.len();
        let m = rows[0].len();
        let mut grand = 0.0;
        for r in rows {
            for v in r {
                grand += v;
            }
        }
        grand /= (n * m) as f64;
        let mut occ = 0.0;
        for j in 0..m {
            let mut c = 0.0;
            for r in rows {
                c += r[j];
            }
            occ += (c / n as f64 - grand).powi(2);
        }
        let mut subj = 0.0;
        let mut err = 0.0;
        let mut total = 0.0;
        for r in rows {
            let rm: f64 = r.iter().sum::<f64>() / m as f64;
            subj += (rm - grand).powi(2);
            for j in 0..m {
                let mut c = 0.0;
                for rr in rows {
                    c += rr[j];
                }
                let cm = c / n as f64;
                err += (r[j] - rm - cm + grand).powi(2);
                total += (r[j] - grand).powi(2);
            }
        }
        (n as f64 * occ, m as f64 * subj, err, total)
    }

    #[test]
    fn worked_example() {
        let r = fit_ranova(&worked()).unwrap();
        let (o, s, e, _) = naive_ss(&[
            vec![1.0, 2.0, 4.0],
            vec![2.0, 3.0, 3.0],
            vec![3.0, 5.0, 4.0],
        ]);
        assert!(
            (o - 14.0 / 3.0).abs() < 1e-12
                && (s - 14.0 / 3.0).abs() < 1e-12
                && (e - 8.0 / 3.0).abs() < 1e-12
        );
        assert!((r.ss_occasion - 14.0 / 3.0).abs() < 1e-12);
        assert!((r.ss_subject - 14.0 / 3.0).abs() < 1e-12);
        assert!((r.ss_error - 8.0 / 3.0).abs() < 1e-12);
        assert!((r.f_value - 3.5).abs() < 1e-12);
        assert_eq!((r.df_occasion, r.df_error), (2.0, 4.0));
        // P(F_{2,4} > 3.5) = (1 + 3.5/2)^-2
        assert!((r.p_uncorrected - 2.75f64.powi(-2)).abs() < 1e-12);
    }

    #[test]
    fn additive_data_is_degenerate() {
        let d = Dataset::from_rows(&[
            vec![1.0, 1.0, 1.0],
            vec![3.0, 3.0, 3.0],
            vec![0.0, 0.0, 0.0],
        ])
        .unwrap();
        assert!(matches!(fit_ranova(&d), Err(Error::DegenerateData(_))));
        let d = Dataset::from_rows(&[vec![1.0, 2.0, 4.0], vec![3.0, 4.0, 6.0]]).unwrap();
        assert!(matches!(fit_ranova(&d), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn brute_force_ss_on_random_4x3() {
        let mut state = 0x1234_5678_u64;
        let mut next = || {
            state = crate::datagen::mix64(state);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 10.0 - 5.0
        };
        for _ in 0..100 {
            let rows: Vec<Vec<f64>> = (0..4).map(|_| (0..3).map(|_| next()).collect()).collect();
            let (o, s, e, total) = naive_ss(&rows);
            let ss = sums_of_squares(&Dataset::from_rows(&rows).unwrap());
            assert!((ss.occasion - o).abs() < 1e-10);
            assert!((ss.subject - s).abs() < 1e-10);
            assert!((ss.error - e).abs() < 1e-10);
            assert!((ss.occasion + ss.subject + ss.error - total).abs() <= 1e-9 * total);
        }
    }

    #[test]
    fn gg_identity_and_compound_symmetry() {
        for m in [2, 3, 6, 9] {
            let c = helmert_contrasts(m).unwrap();
            assert_eq!(gg_epsilon(&SymMatrix::identity(m), &c).unwrap(), 1.0);
            let cs = SymMatrix::identity(m).combine(1.7, &SymMatrix::ones(m), 0.6);
            assert!((gg_epsilon(&cs, &c).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gg_rank_one_hits_lower_bound() {
        let v = [1.0, -2.0, 0.5];
        let mut s = SymMatrix::zeros(3);
        for i in 0..3 {
            for j in 0..=i {
                s.set(i, j, v[i] * v[j]);
            }
        }
        let e = gg_epsilon(&s, &helmert_contrasts(3).unwrap()).unwrap();
        assert!((e - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gg_zero_covariance_is_degenerate() {
        assert!(gg_epsilon(&SymMatrix::zeros(3), &helmert_contrasts(3).unwrap()).is_err());
        assert!(gg_epsilon(&SymMatrix::identity(3), &helmert_contrasts(4).unwrap()).is_err());
    }

    #[test]
    fn hf_worked_values() {
        assert_eq!(hf_epsilon(1.0, 20, 3).unwrap(), 1.0);
        assert!((hf_epsilon(0.5, 20, 3).unwrap() - 0.5).abs() < 1e-15);
        // (20*2*0.6 - 2) / (2*(19 - 1.2)) = 22 / 35.6
        assert!((hf_epsilon(0.6, 20, 3).unwrap() - 22.0 / 35.6).abs() < 1e-14);
    }

    #[test]
    fn hf_never_below_gg() {
        for m in 2..=10usize {
            for n in (m + 1)..=60 {
                let q = (m - 1) as f64;
                for k in 0..=40 {
                    let eps = 1.0 / q + (1.0 - 1.0 / q) * k as f64 / 40.0;
                    let hf = hf_epsilon(eps, n, m).unwrap();
                    assert!(hf >= eps - 1e-12 && hf <= 1.0, "n={n} m={m} eps={eps}");
                }
            }
        }
    }

    #[test]
    fn hf_guards() {
        assert!(matches!(hf_epsilon(1.2, 20, 3), Err(Error::Domain(_))));
        assert!(matches!(hf_epsilon(0.1, 20, 3), Err(Error::Domain(_))));
        assert!(matches!(
            hf_epsilon(1.0, 3, 9),
            Err(Error::DegenerateData(_))
        ));
    }
}
