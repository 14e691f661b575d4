//! Command-line front end for the ladderfolio engines.
//!
//! Four subcommands: `backtest`, `bootstrap`, `metrics`, and `synth`, each
//! writing fixed-format artifacts into an output directory. Flag values
//! override values from the optional flat key=value config file named by
//! `LADDERFOLIO_CONFIG`, which in turn override built-in defaults. Exit
//! codes: 0 success, 2 usage error, 3 data error, 4 runtime error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use ladderfolio::backtest::report::{write_metrics_json, write_report_files};
use ladderfolio::backtest::{
    attach_metrics, run_backtest, BacktestConfig, BacktestReport, FeeSchedule, Frequency,
    RebalancePolicy,
};
use ladderfolio::bootstrap::{
    run_bootstrap, summarize, write_draws_csv, write_summary_json, BootstrapConfig, NMode,
};
use ladderfolio::marketdata::{
    generate_synthetic, load_cpi, load_history, write_cpi_csv, write_history_csv, CpiSeries,
    Month, SynthConfig,
};
use ladderfolio::metrics::{summarize_daily, RiskParams};
use ladderfolio::weighting::Transform;
use ladderfolio::Error as CoreError;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "LADDERFOLIO_CONFIG";

/// Every key a config file may contain (the union over all subcommands).
/// Keys irrelevant to the running subcommand are ignored, so one file can
/// serve a whole pipeline; unknown keys are rejected as likely typos.
const CONFIG_KEYS: [&str; 18] = [
    "data", "cpi", "out", "transform", "rebalance", "start", "end", "initial", "admin-fee",
    "spread-rate", "risk-free", "var-level", "n-mode", "iterations", "seed", "workers", "stocks",
    "years",
];

// ==================== Errors ====================

/// A failure classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Help or version text; not a failure.
    Info(String),
    /// Bad flags, bad config values, impossible parameter combinations.
    Usage(String),
    /// Input files missing or malformed.
    Data(String),
    /// The run itself failed after inputs loaded cleanly.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Info(_) => 0,
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Info(m) | CliError::Usage(m) | CliError::Data(m) | CliError::Runtime(m) => m,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Info(m) => write!(f, "{m}"),
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

/// Errors raised while simulating: a bad parameter combination is still a
/// usage problem, anything else is a runtime failure.
fn classify_run(e: CoreError) -> CliError {
    match e {
        CoreError::InvalidConfig(_) => CliError::Usage(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

// ==================== Flag surface ====================

#[derive(Parser, Debug)]
#[command(
    name = "ladderfolio",
    about = "Backtests, bootstrap resampling, and risk metrics for cap-transform weighted portfolios",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: CommandArgs,
}

#[derive(Subcommand, Debug)]
enum CommandArgs {
    /// Simulate one weighting strategy over a price history and write a report.
    Backtest(BacktestArgs),
    /// Resample cumulative index returns over many random portfolios.
    Bootstrap(BootstrapArgs),
    /// Recompute risk metrics from a previously written returns.csv.
    Metrics(MetricsArgs),
    /// Generate a seeded synthetic price history (plus a companion CPI file).
    Synth(SynthArgs),
}

#[derive(Args, Debug, Default)]
struct BacktestArgs {
    /// Price panel CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// CPI series CSV.
    #[arg(long)]
    cpi: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Weighting transform, or `all` to fan out over every transform.
    #[arg(long)]
    transform: Option<String>,
    /// Rebalance frequency: daily, monthly, quarterly, or annual.
    #[arg(long)]
    rebalance: Option<Frequency>,
    /// First trading day (default: start of the data).
    #[arg(long)]
    start: Option<NaiveDate>,
    /// Last trading day (default: end of the data).
    #[arg(long)]
    end: Option<NaiveDate>,
    /// Starting capital in dollars.
    #[arg(long)]
    initial: Option<f64>,
    /// Per-trade administrative fee in 2015-12 dollars.
    #[arg(long = "admin-fee")]
    admin_fee: Option<f64>,
    /// Round-trip bid-ask spread rate on traded value.
    #[arg(long = "spread-rate")]
    spread_rate: Option<f64>,
    /// Annual risk-free rate used in the report metrics.
    #[arg(long = "risk-free")]
    risk_free: Option<f64>,
    /// Tail level for VaR and cVaR.
    #[arg(long = "var-level")]
    var_level: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct BootstrapArgs {
    /// Price panel CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Weighting transform.
    #[arg(long)]
    transform: Option<String>,
    /// Sample-size rule: uniform:LO-HI or fixed:N.
    #[arg(long = "n-mode")]
    n_mode: Option<NMode>,
    /// Number of resampling iterations.
    #[arg(long)]
    iterations: Option<u64>,
    /// Master seed; each iteration derives its own stream.
    #[arg(long)]
    seed: Option<u64>,
    /// Initial scale each draw compounds from.
    #[arg(long)]
    initial: Option<f64>,
    /// First trading day (default: start of the data).
    #[arg(long)]
    start: Option<NaiveDate>,
    /// Last trading day (default: end of the data).
    #[arg(long)]
    end: Option<NaiveDate>,
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct MetricsArgs {
    /// A returns.csv written by the backtest command.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Annual risk-free rate.
    #[arg(long = "risk-free")]
    risk_free: Option<f64>,
    /// Tail level for VaR and cVaR.
    #[arg(long = "var-level")]
    var_level: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of securities at any one time.
    #[arg(long)]
    stocks: Option<usize>,
    /// Number of calendar years (the horizon always ends with 2015).
    #[arg(long)]
    years: Option<u32>,
    /// Generator seed.
    #[arg(long)]
    seed: Option<u64>,
}

// ==================== Resolved configuration ====================

/// Which transforms a backtest run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformSelection {
    Single(Transform),
    All,
}

impl TransformSelection {
    pub fn transforms(&self) -> Vec<Transform> {
        match self {
            TransformSelection::Single(t) => vec![*t],
            TransformSelection::All => Transform::ALL.to_vec(),
        }
    }
}

/// A fully resolved invocation, ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Backtest {
        data: PathBuf,
        cpi: PathBuf,
        out: PathBuf,
        selection: TransformSelection,
        frequency: Frequency,
        start: Option<NaiveDate>,
        end: Option<NaiveDate>,
        initial: f64,
        fees: FeeSchedule,
        risk: RiskParams,
    },
    Bootstrap {
        data: PathBuf,
        out: PathBuf,
        config: BootstrapConfig,
        workers: Option<usize>,
    },
    Metrics {
        returns: PathBuf,
        out: PathBuf,
        risk: RiskParams,
    },
    Synth {
        out: PathBuf,
        config: SynthConfig,
    },
}

// ==================== Config file ====================

type ConfigMap = BTreeMap<String, String>;

fn load_config_file(path: &Path) -> Result<ConfigMap, CliError> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::Usage(format!("cannot read config file {}: {e}", path.display()))
    })?;
    let mut map = ConfigMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!(
                "config file {} line {}: expected key=value, got '{line}'",
                path.display(),
                i + 1
            ))
        })?;
        let key = key.trim();
        if !CONFIG_KEYS.contains(&key) {
            return Err(CliError::Usage(format!(
                "config file {} line {}: unknown key '{key}'",
                path.display(),
                i + 1
            )));
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// The flag value if given, else the config-file value parsed with `parse`,
/// else nothing.
fn merged<T>(
    flag: Option<T>,
    cfg: &ConfigMap,
    key: &str,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<Option<T>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match cfg.get(key) {
        Some(raw) => parse(raw)
            .map(Some)
            .map_err(|e| CliError::Usage(format!("config key '{key}': {e}"))),
        None => Ok(None),
    }
}

fn require<T>(value: Option<T>, flag: &str, command: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("--{flag} is required for {command}")))
}

fn parse_as<T: std::str::FromStr>(raw: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    raw.parse().map_err(|e: T::Err| e.to_string())
}

// ==================== Transform parsing ====================

/// Notation people actually type, mapped to the canonical transform names.
const TRANSFORM_ALIASES: [(&str, &str); 12] = [
    ("1/x^2", "inv-square"),
    ("1/x2", "inv-square"),
    ("x^-2", "inv-square"),
    ("1/x", "inv"),
    ("1/sqrt(x)", "inv-sqrt"),
    ("1/sqrt", "inv-sqrt"),
    ("log(x)", "log"),
    ("ln", "log"),
    ("sqrt(x)", "sqrt"),
    ("x", "identity"),
    ("x^2", "square"),
    ("equ", "equal"),
];

fn parse_transform(raw: &str) -> Result<Transform, String> {
    if let Ok(t) = raw.parse::<Transform>() {
        return Ok(t);
    }
    let suggestion = TRANSFORM_ALIASES
        .iter()
        .find(|(alias, _)| alias.eq_ignore_ascii_case(raw))
        .map(|(_, canonical)| format!("; did you mean '{canonical}'?"))
        .unwrap_or_default();
    Err(format!(
        "invalid transform '{raw}'{suggestion} (valid: inv-square, inv, inv-sqrt, log, sqrt, \
         identity, square, equal)"
    ))
}

fn parse_selection(raw: &str) -> Result<TransformSelection, String> {
    if raw == "all" {
        return Ok(TransformSelection::All);
    }
    parse_transform(raw).map(TransformSelection::Single)
}

// ==================== Argument parsing ====================

/// Parses argv against the config file named by `LADDERFOLIO_CONFIG` (if
/// set). Help and version requests come back as `CliError::Info`.
pub fn parse_args(argv: impl IntoIterator<Item = String>) -> Result<RunConfig, CliError> {
    let config_path = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
    parse_args_with(argv, config_path.as_deref())
}

/// `parse_args` with an explicit config-file path, for in-process callers.
pub fn parse_args_with(
    argv: impl IntoIterator<Item = String>,
    config_path: Option<&Path>,
) -> Result<RunConfig, CliError> {
    let cli = Cli::try_parse_from(argv).map_err(|e| {
        let rendered = e.render().to_string();
        match e.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                CliError::Info(rendered)
            }
            _ => CliError::Usage(rendered),
        }
    })?;
    let cfg = match config_path {
        Some(path) => load_config_file(path)?,
        None => ConfigMap::new(),
    };
    let command = match cli.command {
        CommandArgs::Backtest(args) => resolve_backtest(args, &cfg)?,
        CommandArgs::Bootstrap(args) => resolve_bootstrap(args, &cfg)?,
        CommandArgs::Metrics(args) => resolve_metrics(args, &cfg)?,
        CommandArgs::Synth(args) => resolve_synth(args, &cfg)?,
    };
    Ok(RunConfig { command })
}

fn resolve_risk(
    risk_free: Option<f64>,
    var_level: Option<f64>,
    cfg: &ConfigMap,
) -> Result<RiskParams, CliError> {
    let defaults = RiskParams::default();
    let risk = RiskParams {
        risk_free_rate: merged(risk_free, cfg, "risk-free", parse_as)?
            .unwrap_or(defaults.risk_free_rate),
        var_level: merged(var_level, cfg, "var-level", parse_as)?.unwrap_or(defaults.var_level),
    };
    risk.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(risk)
}

fn resolve_backtest(args: BacktestArgs, cfg: &ConfigMap) -> Result<Command, CliError> {
    let path = |raw: &str| Ok(PathBuf::from(raw));
    let selection = merged(
        args.transform.as_deref().map(parse_selection).transpose().map_err(flag_error)?,
        cfg,
        "transform",
        parse_selection,
    )?;
    let default_fees = FeeSchedule::default();
    let fees = FeeSchedule {
        admin_fee_2015: merged(args.admin_fee, cfg, "admin-fee", parse_as)?
            .unwrap_or(default_fees.admin_fee_2015),
        spread_rate: merged(args.spread_rate, cfg, "spread-rate", parse_as)?
            .unwrap_or(default_fees.spread_rate),
    };
    fees.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(Command::Backtest {
        data: require(merged(args.data, cfg, "data", path)?, "data", "backtest")?,
        cpi: require(merged(args.cpi, cfg, "cpi", path)?, "cpi", "backtest")?,
        out: require(merged(args.out, cfg, "out", path)?, "out", "backtest")?,
        selection: require(selection, "transform", "backtest")?,
        frequency: merged(args.rebalance, cfg, "rebalance", parse_as)?
            .unwrap_or(Frequency::Daily),
        start: merged(args.start, cfg, "start", parse_as)?,
        end: merged(args.end, cfg, "end", parse_as)?,
        initial: merged(args.initial, cfg, "initial", parse_as)?.unwrap_or(100_000.0),
        fees,
        risk: resolve_risk(args.risk_free, args.var_level, cfg)?,
    })
}

fn resolve_bootstrap(args: BootstrapArgs, cfg: &ConfigMap) -> Result<Command, CliError> {
    let path = |raw: &str| Ok(PathBuf::from(raw));
    let transform = merged(
        args.transform.as_deref().map(parse_transform).transpose().map_err(flag_error)?,
        cfg,
        "transform",
        parse_transform,
    )?;
    let mut config =
        BootstrapConfig::new(require(transform, "transform", "bootstrap")?);
    if let Some(n_mode) = merged(args.n_mode, cfg, "n-mode", parse_as)? {
        config.n_mode = n_mode;
    }
    if let Some(iterations) = merged(args.iterations, cfg, "iterations", parse_as)? {
        config.iterations = iterations;
    }
    if let Some(seed) = merged(args.seed, cfg, "seed", parse_as)? {
        config.master_seed = seed;
    }
    if let Some(scale) = merged(args.initial, cfg, "initial", parse_as)? {
        config.initial_scale = scale;
    }
    config.start_date = merged(args.start, cfg, "start", parse_as)?;
    config.end_date = merged(args.end, cfg, "end", parse_as)?;
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(Command::Bootstrap {
        data: require(merged(args.data, cfg, "data", path)?, "data", "bootstrap")?,
        out: require(merged(args.out, cfg, "out", path)?, "out", "bootstrap")?,
        config,
        workers: merged(args.workers, cfg, "workers", parse_as)?,
    })
}

fn resolve_metrics(args: MetricsArgs, cfg: &ConfigMap) -> Result<Command, CliError> {
    let path = |raw: &str| Ok(PathBuf::from(raw));
    Ok(Command::Metrics {
        returns: require(merged(args.data, cfg, "data", path)?, "data", "metrics")?,
        out: require(merged(args.out, cfg, "out", path)?, "out", "metrics")?,
        risk: resolve_risk(args.risk_free, args.var_level, cfg)?,
    })
}

fn resolve_synth(args: SynthArgs, cfg: &ConfigMap) -> Result<Command, CliError> {
    let path = |raw: &str| Ok(PathBuf::from(raw));
    let mut config = SynthConfig::default();
    if let Some(stocks) = merged(args.stocks, cfg, "stocks", parse_as)? {
        config.n_securities = stocks;
    }
    if let Some(years) = merged(args.years, cfg, "years", parse_as)? {
        config.n_years = years;
    }
    if let Some(seed) = merged(args.seed, cfg, "seed", parse_as)? {
        config.seed = seed;
    }
    Ok(Command::Synth {
        out: require(merged(args.out, cfg, "out", path)?, "out", "synth")?,
        config,
    })
}

fn flag_error(message: String) -> CliError {
    CliError::Usage(message)
}

// ==================== Execution ====================

/// Runs a resolved command, writing its artifacts. Bankruptcy is a valid
/// backtest outcome, not an error.
pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    match &cfg.command {
        Command::Backtest {
            data,
            cpi,
            out,
            selection,
            frequency,
            start,
            end,
            initial,
            fees,
            risk,
        } => {
            let history = load_history(data).map_err(|e| CliError::Data(e.to_string()))?;
            let cpi = load_cpi(cpi).map_err(|e| CliError::Data(e.to_string()))?;
            let (data_start, data_end) = history.date_range();
            let transforms = selection.transforms();
            for transform in &transforms {
                let bt = BacktestConfig {
                    transform: *transform,
                    policy: RebalancePolicy { frequency: *frequency, fee_schedule: *fees },
                    start_date: start.unwrap_or(data_start),
                    end_date: end.unwrap_or(data_end),
                    initial_capital: *initial,
                };
                let mut report = run_backtest(&history, &cpi, &bt).map_err(classify_run)?;
                attach_metrics(&mut report, risk);
                let dir = match selection {
                    TransformSelection::All => out.join(transform.to_string()),
                    TransformSelection::Single(_) => out.clone(),
                };
                write_artifacts(&dir, &report)?;
            }
            Ok(())
        }
        Command::Bootstrap { data, out, config, workers } => {
            let history = load_history(data).map_err(|e| CliError::Data(e.to_string()))?;
            let draws = match workers {
                Some(w) => rayon::ThreadPoolBuilder::new()
                    .num_threads(*w)
                    .build()
                    .map_err(|e| CliError::Runtime(format!("worker pool: {e}")))?
                    .install(|| run_bootstrap(&history, config)),
                None => run_bootstrap(&history, config),
            }
            .map_err(classify_run)?;
            let summary = summarize(&draws).map_err(classify_run)?;
            ensure_dir(out)?;
            write_draws_csv(&out.join("draws.csv"), &draws)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            write_summary_json(&out.join("summary.json"), &summary, config)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            Ok(())
        }
        Command::Metrics { returns, out, risk } => {
            let days = ladderfolio::backtest::report::read_returns_csv(returns)
                .map_err(|e| CliError::Data(e.to_string()))?;
            let summary = summarize_daily(&days, risk);
            ensure_dir(out)?;
            write_metrics_json(&out.join("metrics.json"), &summary)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            Ok(())
        }
        Command::Synth { out, config } => {
            let history = generate_synthetic(config).map_err(classify_run)?;
            ensure_dir(out)?;
            write_history_csv(out.join("prices.csv"), &history)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let cpi = synthetic_cpi(config.n_years).map_err(classify_run)?;
            write_cpi_csv(out.join("cpi.csv"), &cpi)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            Ok(())
        }
    }
}

fn write_artifacts(dir: &Path, report: &BacktestReport) -> Result<(), CliError> {
    ensure_dir(dir)?;
    write_report_files(dir, report).map_err(|e| CliError::Runtime(e.to_string()))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

/// Deterministic companion CPI for generated histories: 2% annual inflation
/// month over month, level 100 at the 2015-12 anchor, covering the whole
/// synthetic horizon.
fn synthetic_cpi(n_years: u32) -> ladderfolio::Result<CpiSeries> {
    let start_year = 2016 - n_years as i32;
    let total = n_years * 12;
    let entries: Vec<(Month, f64)> = (0..total)
        .map(|k| {
            let month = Month::new(start_year + (k / 12) as i32, k % 12 + 1)?;
            let months_before_anchor = (total - 1 - k) as f64;
            Ok((month, 100.0 * 1.02f64.powf(-months_before_anchor / 12.0)))
        })
        .collect::<ladderfolio::Result<_>>()?;
    CpiSeries::from_entries(entries)
}

// ==================== Tests ====================
