//! Deterministic parallel Monte Carlo driver for Type I error rates.
//!
//! Every replication owns a random stream keyed by `(master_seed, cell
//! label, replication index)`, so results do not depend on worker count or
//! scheduling. Per-replication outcomes are collected in index order and
//! reduced sequentially.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::datagen::{derive_stream, Condition, Population, PopulationSpec, SeedSpec};
use crate::error::{Error, Result};
use crate::mlm::{fit_mlm, CovKind, CsMode, DdfMethod};
use crate::numkernel::{f_quantile, f_sf};
use crate::ranova::fit_ranova;

pub const PAPER_SAMPLE_SIZES: [usize; 5] = [20, 40, 60, 80, 100];
pub const PAPER_OCCASIONS: [usize; 3] = [3, 6, 9];
pub const PAPER_REPLICATIONS: usize = 5000;
pub const PAPER_ALPHA: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Method {
    #[serde(rename = "rANOVA")]
    Ranova,
    #[serde(rename = "rANOVA-GG")]
    RanovaGg,
    #[serde(rename = "rANOVA-HF")]
    RanovaHf,
    #[serde(rename = "MLM-CS")]
    MlmCs,
    #[serde(rename = "MLM-UN")]
    MlmUn,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Ranova,
        Method::RanovaGg,
        Method::RanovaHf,
        Method::MlmCs,
        Method::MlmUn,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Ranova => "rANOVA",
            Method::RanovaGg => "rANOVA-GG",
            Method::RanovaHf => "rANOVA-HF",
            Method::MlmCs => "MLM-CS",
            Method::MlmUn => "MLM-UN",
        }
    }

    fn is_anova(self) -> bool {
        matches!(self, Method::Ranova | Method::RanovaGg | Method::RanovaHf)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ranova" => Ok(Method::Ranova),
            "ranova-gg" | "gg" => Ok(Method::RanovaGg),
            "ranova-hf" | "hf" => Ok(Method::RanovaHf),
            "mlm-cs" | "cs" => Ok(Method::MlmCs),
            "mlm-un" | "un" => Ok(Method::MlmUn),
            other => Err(format!(
                "unknown method '{other}' (expected ranova, ranova-gg, ranova-hf, mlm-cs, mlm-un)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Bradley {
    Conservative,
    Acceptable,
    Liberal,
}

impl Bradley {
    pub fn label(self) -> &'static str {
        match self {
            Bradley::Conservative => "conservative",
            Bradley::Acceptable => "acceptable",
            Bradley::Liberal => "liberal",
        }
    }
}

/// Bradley's liberal criterion: acceptable on the closed band `[0.5α, 1.5α]`.
pub fn bradley_classify(rate: f64, alpha: f64) -> Result<Bradley> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Domain(format!(
            "rejection rate must lie in [0,1], got {rate}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    Ok(if rate < 0.5 * alpha {
        Bradley::Conservative
    } else if rate > 1.5 * alpha {
        Bradley::Liberal
    } else {
        Bradley::Acceptable
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SimCondition {
    pub condition: Condition,
    pub m: usize,
    pub n: usize,
}

impl SimCondition {
    pub fn new(condition: Condition, n: usize, m: usize) -> Self {
        Self { condition, m, n }
    }

    /// Stream label for this cell; independent of which other cells are run.
    pub fn stream_label(&self) -> u64 {
        (self.condition.code() << 48) | ((self.m as u64) << 24) | self.n as u64
    }

    fn validate(&self, methods: &[Method]) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidDimension(format!(
                "m must be at least 2, got {}",
                self.m
            )));
        }
        if self.n < 3 {
            return Err(Error::InvalidDimension(format!(
                "n must be at least 3, got {}",
                self.n
            )));
        }
        if methods.contains(&Method::MlmUn) && self.n <= self.m {
            return Err(Error::InvalidDimension(format!(
                "MLM-UN needs n > m, got n={} and m={}",
                self.n, self.m
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub grid: Vec<SimCondition>,
    pub replications: usize,
    pub alpha: f64,
    pub master_seed: u64,
    pub methods: Vec<Method>,
    pub ddf: DdfMethod,
    pub cs_mode: CsMode,
    /// `None` lets the thread pool pick.
    pub workers: Option<usize>,
}

impl RunConfig {
    /// The full 2 × 5 × 3 design with all five methods.
    pub fn paper_default(master_seed: u64) -> Self {
        Self {
            grid: full_grid(&Condition::ALL, &PAPER_SAMPLE_SIZES, &PAPER_OCCASIONS),
            replications: PAPER_REPLICATIONS,
            alpha: PAPER_ALPHA,
            master_seed,
            methods: Method::ALL.to_vec(),
            ddf: DdfMethod::Satterthwaite,
            cs_mode: CsMode::Unconstrained,
            workers: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Domain("replications must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::Domain("no methods requested".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::Domain("empty simulation grid".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Domain("worker count must be positive".into()));
        }
        self.grid.iter().try_for_each(|c| c.validate(&self.methods))
    }
}

/// Cartesian grid in canonical `(condition, m, n)` order.
pub fn full_grid(conditions: &[Condition], ns: &[usize], ms: &[usize]) -> Vec<SimCondition> {
    let mut g: Vec<SimCondition> = conditions
        .iter()
        .flat_map(|&c| {
            ms.iter()
                .flat_map(move |&m| ns.iter().map(move |&n| SimCondition::new(c, n, m)))
        })
        .collect();
    g.sort();
    g.dedup();
    g
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodRate {
    pub method: Method,
    pub rejections: u64,
    pub successes: u64,
    pub failures: u64,
    /// Rejections over successful replications; NaN when none succeeded.
    pub rate: f64,
    pub mc_se: f64,
    pub bradley: Option<Bradley>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellResult {
    pub condition: SimCondition,
    pub replications: usize,
    pub rates: Vec<MethodRate>,
    /// Largest `|p(MLM-CS) − p(rANOVA)|` over replications where both succeeded.
    pub cs_anova_max_gap: Option<f64>,
}

impl CellResult {
    pub fn rate(&self, method: Method) -> Option<&MethodRate> {
        self.rates.iter().find(|r| r.method == method)
    }
}

/// p-values of one replication, aligned with `RunConfig::methods`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicationOutcome {
    pub p_values: Vec<Result<f64, &'static str>>,
}

pub fn run_replication(
    cond: &SimCondition,
    seeds: &SeedSpec,
    cfg: &RunConfig,
) -> ReplicationOutcome {
    match Population::new(PopulationSpec::new(cond.m, cond.condition)) {
        Ok(pop) => replicate(&pop, cond, seeds, cfg),
        Err(e) => ReplicationOutcome {
            p_values: vec![Err(e.kind()); cfg.methods.len()],
        },
    }
}

fn replicate(
    pop: &Population,
    cond: &SimCondition,
    seeds: &SeedSpec,
    cfg: &RunConfig,
) -> ReplicationOutcome {
    let mut rng = derive_stream(seeds);
    let data = match pop.draw(cond.n, &mut rng) {
        Ok(d) => d,
        Err(e) => {
            return ReplicationOutcome {
                p_values: vec![Err(e.kind()); cfg.methods.len()],
            }
        }
    };
    let anova = cfg
        .methods
        .iter()
        .any(|m| m.is_anova())
        .then(|| fit_ranova(&data));
    let p_values = cfg
        .methods
        .iter()
        .map(|&method| {
            let r = match method {
                Method::Ranova | Method::RanovaGg | Method::RanovaHf => {
                    match anova.as_ref().expect("anova fitted when requested") {
                        Ok(a) => Ok(match method {
                            Method::Ranova => a.p_uncorrected,
                            Method::RanovaGg => a.p_gg,
                            _ => a.p_hf,
                        }),
                        Err(e) => Err(e.kind()),
                    }
                }
                Method::MlmCs => fit_mlm(&data, CovKind::Cs, cfg.ddf, cfg.cs_mode)
                    .map(|r| r.p_value)
                    .map_err(|e| e.kind()),
                Method::MlmUn => fit_mlm(&data, CovKind::Un, cfg.ddf, cfg.cs_mode)
                    .map(|r| r.p_value)
                    .map_err(|e| e.kind()),
            };
            r.and_then(|p| {
                if p.is_finite() {
                    Ok(p)
                } else {
                    Err("NonFinite")
                }
            })
        })
        .collect();
    ReplicationOutcome { p_values }
}

/// Runs one cell on the current rayon pool.
pub fn run_cell(cond: &SimCondition, cfg: &RunConfig) -> Result<CellResult> {
    cond.validate(&cfg.methods)?;
    let pop = Population::new(PopulationSpec::new(cond.m, cond.condition))?;
    let outcomes: Vec<ReplicationOutcome> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let seeds = SeedSpec {
                master_seed: cfg.master_seed,
                cell_index: cond.stream_label(),
                replication_index: rep as u64,
            };
            replicate(&pop, cond, &seeds, cfg)
        })
        .collect();
    Ok(aggregate(cond, cfg, &outcomes))
}

fn aggregate(cond: &SimCondition, cfg: &RunConfig, outcomes: &[ReplicationOutcome]) -> CellResult {
    let rates = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let (mut rej, mut ok, mut failed) = (0u64, 0u64, 0u64);
            for o in outcomes {
                match o.p_values[k] {
                    Ok(p) => {
                        ok += 1;
                        if p < cfg.alpha {
                            rej += 1;
                        }
                    }
                    Err(_) => failed += 1,
                }
            }
            let (rate, mc_se) = if ok == 0 {
                (f64::NAN, f64::NAN)
            } else {
                let r = rej as f64 / ok as f64;
                (r, (r * (1.0 - r) / ok as f64).sqrt())
            };
            MethodRate {
                method,
                rejections: rej,
                successes: ok,
                failures: failed,
                rate,
                mc_se,
                bradley: bradley_classify(rate, cfg.alpha).ok(),
            }
        })
        .collect();

    let idx = |m: Method| cfg.methods.iter().position(|&x| x == m);
    let cs_anova_max_gap = match (idx(Method::MlmCs), idx(Method::Ranova)) {
        (Some(a), Some(b)) => outcomes
            .iter()
            .filter_map(|o| match (&o.p_values[a], &o.p_values[b]) {
                (Ok(x), Ok(y)) => Some((x - y).abs()),
                _ => None,
            })
            .reduce(f64::max),
        _ => None,
    };

    CellResult {
        condition: *cond,
        replications: cfg.replications,
        rates,
        cs_anova_max_gap,
    }
}

/// Evaluates every cell in canonical `(condition, m, n)` order.
pub fn run_grid(cfg: &RunConfig) -> Result<Vec<CellResult>> {
    cfg.validate()?;
    let mut grid = cfg.grid.clone();
    grid.sort();
    grid.dedup();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))?;
    pool.install(|| grid.iter().map(|c| run_cell(c, cfg)).collect())
}

/// Reference test used by [`analytic_un_rate`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnReference {
    /// Wald F referred to `F(m−1, ddf)` under the given rule.
    Rule(DdfMethod),
    /// The exact Hotelling test: `T²·(n−m+1)/((n−1)(m−1))` against `F(m−1, n−m+1)`.
    Exact,
}

/// Closed-form null rejection rate of the MLM-UN Wald test.
///
/// The Wald F equals `T²/(m−1)` and `T²·(n−m+1)/((n−1)(m−1)) ~ F(m−1, n−m+1)`
/// whatever the true covariance, so rejecting when `F > c` happens with
/// probability `P(F(m−1, n−m+1) > c·(n−m+1)/(n−1))`.
pub fn analytic_un_rate(n: usize, m: usize, alpha: f64, reference: UnReference) -> Result<f64> {
    if m < 2 || n <= m {
        return Err(Error::Domain(format!(
            "analytic MLM-UN rate needs m >= 2 and n > m (n={n}, m={m})"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "alpha must lie in (0,1), got {alpha}"
        )));
    }
    let q = (m - 1) as f64;
    let exact_df = (n - m + 1) as f64;
    let (ddf, scale) = match reference {
        UnReference::Exact => (exact_df, 1.0),
        UnReference::Rule(rule) => {
            let ddf = match rule {
                DdfMethod::BetweenWithin => ((n - 1) * (m - 1)) as f64,
                DdfMethod::Residual => (n * m - m) as f64,
                // every component df equals n − 1 for UN on complete data
                DdfMethod::Satterthwaite => (n - 1) as f64,
            };
            (ddf, exact_df / (n - 1) as f64)
        }
    };
    let c = f_quantile(1.0 - alpha, q, ddf)?;
    f_sf(c * scale, q, exact_df)
}
