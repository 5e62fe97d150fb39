//! Population covariance structures and seeded multivariate-normal sampling.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{cholesky, CholeskyFactor, SymMatrix};

/// Correlation among odd-numbered occasions in the non-spherical population.
pub const ODD_CORRELATION: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    /// Independent, unit-variance occasions.
    Spherical,
    /// Odd occasions (1-based) correlate at 0.8; everything else is uncorrelated.
    OddCorrelated,
}

impl Condition {
    pub const ALL: [Condition; 2] = [Condition::Spherical, Condition::OddCorrelated];

    pub fn label(self) -> &'static str {
        match self {
            Condition::Spherical => "sphericity",
            Condition::OddCorrelated => "nonsphericity",
        }
    }

    pub(crate) fn code(self) -> u64 {
        match self {
            Condition::Spherical => 0,
            Condition::OddCorrelated => 1,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sphericity" | "spherical" => Ok(Condition::Spherical),
            "nonsphericity" | "non-sphericity" | "oddcorrelated" | "odd-correlated" => {
                Ok(Condition::OddCorrelated)
            }
            other => Err(format!(
                "unknown condition '{other}' (expected sphericity or nonsphericity)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PopulationSpec {
    pub m: usize,
    pub condition: Condition,
}

impl PopulationSpec {
    pub fn new(m: usize, condition: Condition) -> Self {
        Self { m, condition }
    }
}

/// Complete, balanced `n × m` response matrix (subjects by occasions).
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n: usize,
    m: usize,
    values: Vec<f64>,
    subject_ids: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(n: usize, m: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 || m < 2 {
            return Err(Error::InvalidDimension(format!(
                "dataset needs at least 2 subjects and 2 occasions, got n={n}, m={m}"
            )));
        }
        if values.len() != n * m {
            return Err(Error::InvalidDimension(format!(
                "expected {} values for {n} x {m}, got {}",
                n * m,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDimension(format!(
                "non-finite value at subject {}, occasion {}",
                pos / m + 1,
                pos % m + 1
            )));
        }
        Ok(Self {
            n,
            m,
            values,
            subject_ids: None,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != m) {
            return Err(Error::InvalidDimension(format!(
                "row {} has {} values, expected {m}",
                i + 1,
                rows[i].len()
            )));
        }
        Self::new(rows.len(), m, rows.concat())
    }

    pub fn with_subject_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n {
            return Err(Error::InvalidDimension(format!(
                "{} subject ids for {} subjects",
                ids.len(),
                self.n
            )));
        }
        self.subject_ids = Some(ids);
        Ok(self)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, subject: usize, occasion: usize) -> f64 {
        self.values[subject * self.m + occasion]
    }

    pub fn row(&self, subject: usize) -> &[f64] {
        &self.values[subject * self.m..(subject + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.m)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn subject_ids(&self) -> Option<&[String]> {
        self.subject_ids.as_deref()
    }

    /// Label for subject `i`: the stored id, or its 1-based index.
    pub fn subject_label(&self, i: usize) -> String {
        match &self.subject_ids {
            Some(ids) => ids[i].clone(),
            None => (i + 1).to_string(),
        }
    }

    /// Applies `y → f(y)` elementwise.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut d = Self::new(self.n, self.m, self.values.iter().map(|&v| f(v)).collect())?;
        d.subject_ids = self.subject_ids.clone();
        Ok(d)
    }
}

pub fn population_covariance(spec: &PopulationSpec) -> Result<SymMatrix> {
    if spec.m < 2 {
        return Err(Error::InvalidDimension(format!(
            "need at least 2 occasions, got {}",
            spec.m
        )));
    }
    let mut s = SymMatrix::identity(spec.m);
    if spec.condition == Condition::OddCorrelated {
        // 0-based even indices are the 1-based odd occasions
        for i in (0..spec.m).step_by(2) {
            for j in (0..i).step_by(2) {
                s.set(i, j, ODD_CORRELATION);
            }
        }
    }
    Ok(s)
}

/// Labels that identify one replication's random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub cell_index: u64,
    pub replication_index: u64,
}

pub type RngStream = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Keys a ChaCha8 generator from the seed triple.
///
/// The 256-bit key is the chain `k0 = mix(master)`, `k1 = mix(k0 ^ cell)`,
/// `k2 = mix(k1 ^ replication)`, `k3 = mix(k2)`, each word little-endian.
/// No state is shared between streams, so any replication can be
/// regenerated in isolation.
pub fn derive_stream(seed: &SeedSpec) -> RngStream {
    let k0 = mix64(seed.master_seed);
    let k1 = mix64(k0 ^ seed.cell_index);
    let k2 = mix64(k1 ^ seed.replication_index);
    let k3 = mix64(k2);
    let mut key = [0u8; 32];
    for (chunk, word) in key.chunks_exact_mut(8).zip([k0, k1, k2, k3]) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Standard normals by the Marsaglia polar method; the second variate of
/// each accepted pair is kept for the next call.
pub struct PolarNormal<'a, R: Rng> {
    rng: &'a mut R,
    spare: Option<f64>,
}

impl<'a, R: Rng> PolarNormal<'a, R> {
    pub fn new(rng: &'a mut R) -> Self {
        Self { rng, spare: None }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.rng.random::<f64>() - 1.0;
            let v = 2.0 * self.rng.random::<f64>() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let k = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * k);
                return u * k;
            }
        }
    }
}

/// A population with its covariance factor cached for repeated draws.
#[derive(Clone, Debug)]
pub struct Population {
    spec: PopulationSpec,
    covariance: SymMatrix,
    factor: CholeskyFactor,
}

impl Population {
    pub fn new(spec: PopulationSpec) -> Result<Self> {
        let covariance = population_covariance(&spec)?;
        let factor = cholesky(&covariance)?;
        Ok(Self {
            spec,
            covariance,
            factor,
        })
    }

    pub fn spec(&self) -> &PopulationSpec {
        &self.spec
    }

    pub fn covariance(&self) -> &SymMatrix {
        &self.covariance
    }

    /// Draws `n` independent rows `L·z`, `z` filled row by row from one polar-normal stream.
    pub fn draw<R: Rng>(&self, n: usize, rng: &mut R) -> Result<Dataset> {
        let m = self.spec.m;
        if n < 2 {
            return Err(Error::InvalidDimension(format!(
                "need at least 2 subjects, got {n}"
            )));
        }
        let mut normals = PolarNormal::new(rng);
        let mut values = vec![0.0; n * m];
        let mut z = vec![0.0; m];
        for row in values.chunks_exact_mut(m) {
            z.iter_mut().for_each(|v| *v = normals.sample());
            self.factor.lower_mul(&z, row);
        }
        Dataset::new(n, m, values)
    }
}

pub fn draw_dataset<R: Rng>(spec: &PopulationSpec, n: usize, rng: &mut R) -> Result<Dataset> {
    Population::new(*spec)?.draw(n, rng)
}

/// Occasion means and the sample covariance (divisor `n − 1`).
pub fn sample_moments(d: &Dataset) -> Result<(Vec<f64>, SymMatrix)> {
    let (n, m) = (d.n(), d.m());
    if n < 2 {
        return Err(Error::InvalidDimension(format!(
            "need at least 2 subjects, got {n}"
        )));
    }
    let mut mean = vec![0.0; m];
    for row in d.rows() {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);

    let mut cross = vec![0.0; m * m];
    let mut dev = vec![0.0; m];
    for row in d.rows() {
        for j in 0..m {
            dev[j] = row[j] - mean[j];
        }
        for i in 0..m {
            let di = dev[i];
            for j in 0..=i {
                cross[i * m + j] += di * dev[j];
            }
        }
    }
    let mut cov = SymMatrix::zeros(m);
    let div = (n - 1) as f64;
    for i in 0..m {
        for j in 0..=i {
            cov.set(i, j, cross[i * m + j] / div);
        }
    }
    Ok((mean, cov))
}
