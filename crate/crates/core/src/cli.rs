//! Command-line front end: `simulate`, `analyze`, `gen`, `plot`.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid configuration or input.
//! Every option of `simulate` can also come from a `--config` file of
//! `key = value` lines whose keys are the long flag names; explicit flags
//! win over the file, and the file wins over built-in defaults.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::datagen::{derive_stream, Condition, Population, PopulationSpec, SeedSpec};
use crate::error::Error;
use crate::io_report::{
    read_dataset, read_results, render_figure, results_table, summary_table, write_atomic,
    write_dataset, write_results, DataFormat,
};
use crate::mlm::{fit_mlm, CovKind, CsMode, DdfMethod, MlmResult};
use crate::ranova::fit_ranova;
use crate::simengine::{
    full_grid, run_grid, Method, RunConfig, SimCondition, PAPER_ALPHA, PAPER_REPLICATIONS,
};

pub const WORKERS_ENV: &str = "SPHERICAL_WORKERS";

#[derive(Debug, Parser)]
#[command(
    name = "rmsim",
    version,
    about = "Repeated-measures ANOVA vs. mixed models: analysis and Type I error simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the Monte Carlo grid and write a results table.
    Simulate(SimulateArgs),
    /// Analyze one dataset with each method.
    Analyze(AnalyzeArgs),
    /// Draw one dataset from a population and write it as wide CSV.
    Gen(GenArgs),
    /// Draw one SVG figure per (condition, m) found in a results table.
    Plot(PlotArgs),
}

#[derive(Debug, Default, Args)]
pub struct SimulateArgs {
    /// File of `key = value` lines using the flag names below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Replications per cell [default: 5000].
    #[arg(long)]
    pub reps: Option<String>,
    /// Nominal significance level [default: 0.05].
    #[arg(long)]
    pub alpha: Option<String>,
    /// Comma-separated sample sizes [default: 20,40,60,80,100].
    #[arg(long)]
    pub n: Option<String>,
    /// Comma-separated occasion counts [default: 3,6,9].
    #[arg(long)]
    pub m: Option<String>,
    /// Comma-separated populations [default: sphericity,nonsphericity].
    #[arg(long)]
    pub conditions: Option<String>,
    /// Comma-separated methods [default: all five].
    #[arg(long)]
    pub methods: Option<String>,
    /// Master seed (required).
    #[arg(long)]
    pub seed: Option<String>,
    /// Mixed-model denominator df: between-within | residual | satterthwaite [default: satterthwaite].
    #[arg(long)]
    pub ddf: Option<String>,
    /// MLM-CS subject variance handling: unconstrained | truncated [default: unconstrained].
    #[arg(long = "cs-mode")]
    pub cs_mode: Option<String>,
    /// Worker threads [default: automatic; SPHERICAL_WORKERS also honored].
    #[arg(long)]
    pub workers: Option<String>,
    /// Results CSV path.
    #[arg(long)]
    pub out: Option<String>,
    /// Also write figures into this directory.
    #[arg(long)]
    pub figures: Option<String>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// wide | long
    #[arg(long, default_value = "wide")]
    pub format: String,
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long, default_value = "satterthwaite")]
    pub ddf: String,
    #[arg(long = "cs-mode", default_value = "unconstrained")]
    pub cs_mode: String,
    #[arg(long, default_value_t = PAPER_ALPHA)]
    pub alpha: f64,
    /// Emit JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub m: usize,
    /// sphericity | nonsphericity
    #[arg(long)]
    pub condition: String,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub outdir: PathBuf,
}

/// A diagnostic plus the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Io { .. }) { 1 } else { 2 };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

/// Parses `args` (program name first) and runs the subcommand; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            if code == 0 {
                let _ = write!(out, "{e}");
            } else {
                let text = e.to_string();
                let line = text.lines().next().unwrap_or("invalid arguments");
                eprintln!("rmsim: {}", line.trim_start_matches("error: "));
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(&a, out),
        Command::Analyze(a) => analyze(&a, out),
        Command::Gen(a) => gen(&a),
        Command::Plot(a) => plot(&a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("rmsim: {}", e.message.replace('\n', " "));
            e.code
        }
    }
}

pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    const KEYS: [&str; 12] = [
        "reps",
        "alpha",
        "n",
        "m",
        "conditions",
        "methods",
        "seed",
        "ddf",
        "cs-mode",
        "workers",
        "out",
        "figures",
    ];
    let text = std::fs::read_to_string(path).map_err(|e| CliError::from(Error::io(path, e)))?;
    let mut map = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::config(format!(
                "{}:{}: expected 'key = value'",
                path.display(),
                k + 1
            ))
        })?;
        let key = key.trim().trim_start_matches("--").to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(CliError::config(format!(
                "{}:{}: unknown key '{key}'",
                path.display(),
                k + 1
            )));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

fn parse_value<T: FromStr>(flag: &str, raw: &str, what: &str) -> Result<T, CliError> {
    raw.trim()
        .parse::<T>()
        .map_err(|_| CliError::config(format!("--{flag}: expected {what}, got '{raw}'")))
}

fn parse_list<T: FromStr>(flag: &str, raw: &str, what: &str) -> Result<Vec<T>, CliError> {
    let items: Vec<T> = raw
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_value(flag, s, what))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(CliError::config(format!("--{flag}: empty list")));
    }
    Ok(items)
}

/// Resolved `simulate` invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatePlan {
    pub config: RunConfig,
    pub out: Option<PathBuf>,
    pub figures: Option<PathBuf>,
}

/// Merges flags over the config file over defaults and validates the result.
pub fn resolve_simulate(
    args: &SimulateArgs,
    env_workers: Option<String>,
) -> Result<SimulatePlan, CliError> {
    let file = match &args.config {
        Some(p) => parse_config_file(p)?,
        None => BTreeMap::new(),
    };
    let pick = |flag: &Option<String>, key: &str| flag.clone().or_else(|| file.get(key).cloned());

    let reps = match pick(&args.reps, "reps") {
        Some(r) => parse_value::<usize>("reps", &r, "a positive integer")?,
        None => PAPER_REPLICATIONS,
    };
    if reps == 0 {
        return Err(CliError::config("--reps: must be at least 1"));
    }
    let alpha = match pick(&args.alpha, "alpha") {
        Some(a) => parse_value::<f64>("alpha", &a, "a number in (0,1)")?,
        None => PAPER_ALPHA,
    };
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::config(format!(
            "--alpha: must lie in (0,1), got {alpha}"
        )));
    }
    let ns = match pick(&args.n, "n") {
        Some(v) => parse_list::<usize>("n", &v, "comma-separated integers")?,
        None => crate::simengine::PAPER_SAMPLE_SIZES.to_vec(),
    };
    let ms = match pick(&args.m, "m") {
        Some(v) => parse_list::<usize>("m", &v, "comma-separated integers")?,
        None => crate::simengine::PAPER_OCCASIONS.to_vec(),
    };
    let conditions = match pick(&args.conditions, "conditions") {
        Some(v) => parse_list::<Condition>("conditions", &v, "sphericity or nonsphericity")?,
        None => Condition::ALL.to_vec(),
    };
    let mut methods = match pick(&args.methods, "methods") {
        Some(v) => parse_list::<Method>(
            "methods",
            &v,
            "ranova, ranova-gg, ranova-hf, mlm-cs or mlm-un",
        )?,
        None => Method::ALL.to_vec(),
    };
    methods.sort();
    methods.dedup();
    let seed = match pick(&args.seed, "seed") {
        Some(s) => parse_value::<u64>("seed", &s, "an unsigned 64-bit integer")?,
        None => return Err(CliError::config("--seed: a master seed is required")),
    };
    let ddf = match pick(&args.ddf, "ddf") {
        Some(v) => {
            parse_value::<DdfMethod>("ddf", &v, "between-within, residual or satterthwaite")?
        }
        None => DdfMethod::Satterthwaite,
    };
    let cs_mode = match pick(&args.cs_mode, "cs-mode") {
        Some(v) => parse_value::<CsMode>("cs-mode", &v, "unconstrained or truncated")?,
        None => CsMode::Unconstrained,
    };
    let workers_raw = args
        .workers
        .clone()
        .or(env_workers)
        .or_else(|| file.get("workers").cloned());
    let workers = match workers_raw.as_deref().map(str::trim) {
        None | Some("auto") | Some("automatic") => None,
        Some(w) => {
            let w = parse_value::<usize>("workers", w, "a positive integer or 'auto'")?;
            if w == 0 {
                return Err(CliError::config("--workers: must be at least 1"));
            }
            Some(w)
        }
    };

    for &m in &ms {
        if m < 2 {
            return Err(CliError::config(format!(
                "--m: occasion counts must be at least 2, got {m}"
            )));
        }
    }
    for &n in &ns {
        if n < 3 {
            return Err(CliError::config(format!(
                "--n: sample sizes must be at least 3, got {n}"
            )));
        }
    }
    if methods.contains(&Method::MlmUn) {
        let (max_m, min_n) = (ms.iter().max().unwrap(), ns.iter().min().unwrap());
        if min_n <= max_m {
            return Err(CliError::config(format!(
                "--n: MLM-UN needs every n above every m (n={min_n}, m={max_m})"
            )));
        }
    }

    let config = RunConfig {
        grid: full_grid(&conditions, &ns, &ms),
        replications: reps,
        alpha,
        master_seed: seed,
        methods,
        ddf,
        cs_mode,
        workers,
    };
    config
        .validate()
        .map_err(|e| CliError::config(e.to_string()))?;
    Ok(SimulatePlan {
        config,
        out: pick(&args.out, "out").map(PathBuf::from),
        figures: pick(&args.figures, "figures").map(PathBuf::from),
    })
}

fn figure_name(condition: Condition, m: usize) -> String {
    format!("typeI_{}_m{m}.svg", condition.label())
}

/// Renders every `(condition, m)` panel in `rows` without touching the filesystem.
fn render_figures(
    rows: &[crate::io_report::ResultRow],
    dir: &Path,
) -> Result<Vec<(PathBuf, String)>, Error> {
    let mut panels: Vec<(Condition, usize)> = rows.iter().map(|r| (r.condition, r.m)).collect();
    panels.sort();
    panels.dedup();
    panels
        .iter()
        .map(|&(c, m)| Ok((dir.join(figure_name(c, m)), render_figure(rows, c, m)?)))
        .collect()
}

fn write_figures(dir: &Path, rendered: &[(PathBuf, String)]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::from(Error::io(dir, e)))?;
    for (path, svg) in rendered {
        write_atomic(path, svg.as_bytes())?;
    }
    Ok(())
}

fn io_out(e: std::io::Error) -> CliError {
    CliError {
        code: 1,
        message: format!("stdout: {e}"),
    }
}

fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let plan = resolve_simulate(args, std::env::var(WORKERS_ENV).ok())?;
    let cfg = &plan.config;
    let results = run_grid(cfg)?;
    let rows = results_table(&results, cfg);
    let figures = match &plan.figures {
        Some(dir) => Some((dir, render_figures(&rows, dir)?)),
        None => None,
    };
    if let Some(path) = &plan.out {
        write_results(&rows, path)?;
    }
    if let Some((dir, rendered)) = &figures {
        write_figures(dir, rendered)?;
    }
    writeln!(
        out,
        "replications={} alpha={} seed={} ddf={} cs-mode={}",
        cfg.replications, cfg.alpha, cfg.master_seed, cfg.ddf, cfg.cs_mode
    )
    .map_err(io_out)?;
    write!(out, "{}", summary_table(&rows)).map_err(io_out)?;
    let failures: u64 = results
        .iter()
        .flat_map(|c| &c.rates)
        .map(|r| r.failures)
        .sum();
    writeln!(
        out,
        "flags: L = above 1.5*alpha, C = below 0.5*alpha; failed fits: {failures}"
    )
    .map_err(io_out)?;
    Ok(())
}

fn mlm_line(method: Method, r: &MlmResult, alpha: f64) -> (String, serde_json::Value) {
    let decision = if r.p_value < alpha {
        "reject"
    } else {
        "retain"
    };
    let text = format!(
        "{:<10} F = {:.6}  df = ({}, {:.4})  p = {:.6}  {decision}  [ddf {}]",
        method.label(),
        r.f_value,
        r.df_num,
        r.df_den,
        r.p_value,
        r.ddf_method
    );
    let value = json!({
        "method": method.label(),
        "statistic": r.f_value,
        "df_num": r.df_num,
        "df_den": r.df_den,
        "p_value": r.p_value,
        "reject": r.p_value < alpha,
        "ddf_method": r.ddf_method.label(),
        "fit": r,
    });
    (text, value)
}

fn error_line(method: Method, e: &Error) -> (String, serde_json::Value) {
    (
        format!("{:<10} error: {}: {e}", method.label(), e.kind()),
        json!({ "method": method.label(), "error": { "kind": e.kind(), "message": e.to_string() } }),
    )
}

fn analyze(args: &AnalyzeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let format = parse_value::<DataFormat>("format", &args.format, "wide or long")?;
    let ddf = parse_value::<DdfMethod>(
        "ddf",
        &args.ddf,
        "between-within, residual or satterthwaite",
    )?;
    let cs_mode = parse_value::<CsMode>("cs-mode", &args.cs_mode, "unconstrained or truncated")?;
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::config(format!(
            "--alpha: must lie in (0,1), got {}",
            args.alpha
        )));
    }
    let methods = match &args.methods {
        Some(v) => parse_list::<Method>(
            "methods",
            v,
            "ranova, ranova-gg, ranova-hf, mlm-cs or mlm-un",
        )?,
        None => Method::ALL.to_vec(),
    };
    let data = read_dataset(&args.input, format)?;
    let alpha = args.alpha;

    let anova = fit_ranova(&data);
    let mut lines = Vec::new();
    for &method in &methods {
        let entry = match method {
            Method::Ranova | Method::RanovaGg | Method::RanovaHf => match &anova {
                Ok(a) => {
                    let (eps, p) = match method {
                        Method::Ranova => (1.0, a.p_uncorrected),
                        Method::RanovaGg => (a.eps_gg, a.p_gg),
                        _ => (a.eps_hf, a.p_hf),
                    };
                    let (d1, d2) = (eps * a.df_occasion, eps * a.df_error);
                    let decision = if p < alpha { "reject" } else { "retain" };
                    let mut text = format!(
                        "{:<10} F = {:.6}  df = ({}, {})  p = {:.6}  {decision}",
                        method.label(),
                        a.f_value,
                        trim_df(d1),
                        trim_df(d2),
                        p
                    );
                    if method != Method::Ranova {
                        text.push_str(&format!("  [epsilon {eps:.6}]"));
                    }
                    let value = json!({
                        "method": method.label(),
                        "statistic": a.f_value,
                        "df_num": d1,
                        "df_den": d2,
                        "epsilon": eps,
                        "p_value": p,
                        "reject": p < alpha,
                        "anova": a,
                    });
                    (text, value)
                }
                Err(e) => error_line(method, e),
            },
            Method::MlmCs | Method::MlmUn => {
                let kind = if method == Method::MlmCs {
                    CovKind::Cs
                } else {
                    CovKind::Un
                };
                match fit_mlm(&data, kind, ddf, cs_mode) {
                    Ok(r) => mlm_line(method, &r, alpha),
                    Err(e) => error_line(method, &e),
                }
            }
        };
        lines.push(entry);
    }

    if args.json {
        let doc = json!({
            "input": args.input.display().to_string(),
            "n": data.n(),
            "m": data.m(),
            "alpha": alpha,
            "results": lines.iter().map(|(_, v)| v.clone()).collect::<Vec<_>>(),
        });
        writeln!(
            out,
            "{}",
            serde_json::to_string_pretty(&doc).expect("serializable")
        )
        .map_err(io_out)?;
    } else {
        writeln!(
            out,
            "{}: n = {}, m = {}, alpha = {alpha}",
            args.input.display(),
            data.n(),
            data.m()
        )
        .map_err(io_out)?;
        for (text, _) in &lines {
            writeln!(out, "{text}").map_err(io_out)?;
        }
    }
    Ok(())
}

fn trim_df(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round())
    } else {
        format!("{v:.4}")
    }
}

fn gen(args: &GenArgs) -> Result<(), CliError> {
    let condition =
        parse_value::<Condition>("condition", &args.condition, "sphericity or nonsphericity")?;
    if args.m < 2 {
        return Err(CliError::config(format!(
            "--m: must be at least 2, got {}",
            args.m
        )));
    }
    if args.n < 2 {
        return Err(CliError::config(format!(
            "--n: must be at least 2, got {}",
            args.n
        )));
    }
    // same stream as replication 0 of the matching simulation cell
    let cell = SimCondition::new(condition, args.n, args.m);
    let seeds = SeedSpec {
        master_seed: args.seed,
        cell_index: cell.stream_label(),
        replication_index: 0,
    };
    let population = Population::new(PopulationSpec::new(args.m, condition))?;
    let data = population.draw(args.n, &mut derive_stream(&seeds))?;
    write_dataset(&data, &args.out)?;
    Ok(())
}

fn plot(args: &PlotArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let rows = read_results(&args.input)?;
    if rows.is_empty() {
        return Err(CliError::config(format!(
            "{}: no result rows",
            args.input.display()
        )));
    }
    let rendered = render_figures(&rows, &args.outdir)?;
    write_figures(&args.outdir, &rendered)?;
    for (path, _) in &rendered {
        writeln!(out, "{}", path.display()).map_err(io_out)?;
    }
    Ok(())
}
