//! Cross-sectional resampling of cumulative index returns.
//!
//! Each iteration samples N member securities with replacement (duplicates
//! keep their multiplicity), replays the history day by day with weights
//! formed from previous-day market caps, replaces any security that drops
//! out mid-path with a uniform draw from that day's members, and compounds
//! daily index returns into one cumulative-return draw. No fees are charged.
//! Iterations run in parallel under per-iteration RNG streams, so results
//! are identical for any worker count.

use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marketdata::MarketHistory;
use crate::metrics::order_statistic_k;
use crate::weighting::Transform;

/// How the per-iteration sample size N is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NMode {
    /// N drawn uniformly from lo..=hi each iteration.
    Uniform { lo: u32, hi: u32 },
    /// N fixed for every iteration.
    Fixed(u32),
}

impl Default for NMode {
    fn default() -> Self {
        NMode::Uniform { lo: 100, hi: 500 }
    }
}

impl std::fmt::Display for NMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NMode::Uniform { lo, hi } => write!(f, "uniform:{lo}-{hi}"),
            NMode::Fixed(n) => write!(f, "fixed:{n}"),
        }
    }
}

impl std::str::FromStr for NMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let invalid = || {
            Error::InvalidConfig(format!(
                "invalid n-mode '{s}' (expected uniform:LO-HI or fixed:N)"
            ))
        };
        let (kind, arg) = s.split_once(':').ok_or_else(invalid)?;
        match kind {
            "uniform" => {
                let (lo, hi) = arg.split_once('-').ok_or_else(invalid)?;
                let lo: u32 = lo.parse().map_err(|_| invalid())?;
                let hi: u32 = hi.parse().map_err(|_| invalid())?;
                if lo == 0 || lo > hi {
                    return Err(Error::InvalidConfig(format!(
                        "invalid n-mode '{s}': need 1 <= LO <= HI"
                    )));
                }
                Ok(NMode::Uniform { lo, hi })
            }
            "fixed" => {
                let n: u32 = arg.parse().map_err(|_| invalid())?;
                if n == 0 {
                    return Err(Error::InvalidConfig(format!("invalid n-mode '{s}': N must be >= 1")));
                }
                Ok(NMode::Fixed(n))
            }
            _ => Err(invalid()),
        }
    }
}

impl Serialize for NMode {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for NMode {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parameters of one bootstrap run.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapConfig {
    pub n_mode: NMode,
    pub iterations: u64,
    pub transform: Transform,
    pub master_seed: u64,
    pub initial_scale: f64,
    /// First day of the replayed horizon; defaults to the history start.
    pub start_date: Option<NaiveDate>,
    /// Last day of the replayed horizon; defaults to the history end.
    pub end_date: Option<NaiveDate>,
}

impl BootstrapConfig {
    pub fn new(transform: Transform) -> Self {
        Self {
            n_mode: NMode::default(),
            iterations: 20_000,
            transform,
            master_seed: 0,
            initial_scale: 1e5,
            start_date: None,
            end_date: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.n_mode {
            NMode::Uniform { lo, hi } if lo == 0 || lo > hi => {
                return Err(Error::InvalidConfig(format!(
                    "n-mode bounds need 1 <= lo <= hi, got {lo}-{hi}"
                )));
            }
            NMode::Fixed(0) => {
                return Err(Error::InvalidConfig("fixed N must be >= 1".into()));
            }
            _ => {}
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be >= 1".into()));
        }
        if !(self.initial_scale > 0.0 && self.initial_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "initial scale must be positive, got {}",
                self.initial_scale
            )));
        }
        Ok(())
    }
}

/// One iteration's outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDraw {
    pub iteration: u64,
    pub cumulative_return: f64,
}

/// Distribution summary of a draw collection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub q1: f64,
    pub q5: f64,
    pub q95: f64,
    pub q99: f64,
    pub iterations: u64,
}

/// RNG stream for one iteration: a stable integer mix of the master seed
/// and the iteration index, so any execution order yields the same draws.
fn iteration_rng(master_seed: u64, itr: u64) -> ChaCha8Rng {
    let mixed = splitmix64(master_seed ^ itr.wrapping_add(1).wrapping_mul(0x9E3779B97F4A7C15));
    ChaCha8Rng::seed_from_u64(mixed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Resolves the replayed day-index range and checks the sample size is
/// feasible for the starting member set.
fn check_against(h: &MarketHistory, cfg: &BootstrapConfig) -> Result<(usize, usize)> {
    cfg.validate()?;
    let calendar = h.calendar();
    let (h_start, h_end) = h.date_range();
    let start = cfg.start_date.unwrap_or(h_start);
    let end = cfg.end_date.unwrap_or(h_end);
    let i0 = calendar.iter().position(|d| *d >= start);
    let i1 = calendar.iter().rposition(|d| *d <= end);
    let (i0, i1) = match (i0, i1) {
        (Some(a), Some(b)) if a < b => (a, b),
        _ => {
            return Err(Error::InvalidConfig(format!(
                "horizon {start}..{end} covers fewer than 2 trading days"
            )));
        }
    };
    let member_count = h.member_ordinals(i0).len();
    if member_count == 0 {
        return Err(Error::EmptyUniverse(format!(
            "no member securities on {}",
            calendar[i0]
        )));
    }
    if let NMode::Fixed(n) = cfg.n_mode {
        if n as usize > member_count {
            return Err(Error::InvalidConfig(format!(
                "fixed N = {n} exceeds the {member_count} member securities on {}",
                calendar[i0]
            )));
        }
    }
    Ok((i0, i1))
}

/// Replays one sampled portfolio over days `i0..=i1`.
///
/// `positions` is the sampled multiset as security ordinals. Each day t, a
/// position alive and member-flagged contributes its total return weighted
/// by the transform of its day t-1 market cap; a position that delisted or
/// left the member set is replaced by a uniform draw from day t's members
/// and contributes nothing that day. A day where nothing contributes
/// compounds at zero.
fn simulate_path(
    h: &MarketHistory,
    range: (usize, usize),
    transform: Transform,
    initial_scale: f64,
    mut positions: Vec<u32>,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let (i0, i1) = range;
    let mut cumulative = initial_scale;
    for t in (i0 + 1)..=i1 {
        let members = h.member_ordinals(t);
        if members.is_empty() {
            return Err(Error::EmptyUniverse(format!(
                "no member securities on {}",
                h.calendar()[t]
            )));
        }
        let mut num = 0.0;
        let mut denom = 0.0;
        for slot in positions.iter_mut() {
            let contribution = h.rec(*slot, t).filter(|rec| rec.is_member).map(|rec| {
                // A replacement drawn yesterday always has a yesterday
                // record, so a missing prior day only happens on malformed
                // hand-built inputs; such a position sits out the day.
                h.rec(*slot, t - 1).map(|prev| {
                    let weight = transform.apply(prev.close * prev.shares_outstanding)?;
                    let total_return = (rec.close + rec.dividend) / prev.close - 1.0;
                    Ok::<(f64, f64), Error>((weight, total_return))
                })
            });
            match contribution {
                Some(Some(pair)) => {
                    let (weight, total_return) = pair?;
                    num += weight * total_return;
                    denom += weight;
                }
                Some(None) => {}
                None => *slot = members[rng.random_range(0..members.len())],
            }
        }
        if denom > 0.0 {
            cumulative *= 1.0 + num / denom;
        }
    }
    Ok(cumulative)
}

/// Runs iteration `itr`: draws N, samples the starting member set with
/// replacement, and replays the horizon into one cumulative-return draw.
pub fn run_iteration(h: &MarketHistory, cfg: &BootstrapConfig, itr: u64) -> Result<BootstrapDraw> {
    let range = check_against(h, cfg)?;
    let mut rng = iteration_rng(cfg.master_seed, itr);
    let members = h.member_ordinals(range.0);
    let n = match cfg.n_mode {
        NMode::Fixed(n) => n,
        NMode::Uniform { lo, hi } => rng.random_range(lo..=hi),
    };
    let positions: Vec<u32> =
        (0..n).map(|_| members[rng.random_range(0..members.len())]).collect();
    let cumulative_return =
        simulate_path(h, range, cfg.transform, cfg.initial_scale, positions, &mut rng)?;
    Ok(BootstrapDraw { iteration: itr, cumulative_return })
}

/// Runs every iteration, in parallel, and returns draws in iteration order.
///
/// The draw collection is a pure function of the history and config; worker
/// count and scheduling cannot change it. On failure the error names the
/// lowest failing iteration.
pub fn run_bootstrap(h: &MarketHistory, cfg: &BootstrapConfig) -> Result<Vec<BootstrapDraw>> {
    check_against(h, cfg)?;
    let results: Vec<Result<BootstrapDraw>> =
        (0..cfg.iterations).into_par_iter().map(|itr| run_iteration(h, cfg, itr)).collect();
    let mut draws = Vec::with_capacity(results.len());
    for (itr, result) in results.into_iter().enumerate() {
        match result {
            Ok(draw) => draws.push(draw),
            Err(e) => {
                return Err(Error::Iteration { iteration: itr as u64, source: Box::new(e) })
            }
        }
    }
    Ok(draws)
}

/// Mean, midpoint median, sample sd, and lower order-statistic percentiles
/// at 1, 5, 95, and 99 percent.
pub fn summarize(draws: &[BootstrapDraw]) -> Result<BootstrapSummary> {
    if draws.is_empty() {
        return Err(Error::EmptyUniverse("no draws to summarize".into()));
    }
    let mut values: Vec<f64> = draws.iter().map(|d| d.cumulative_return).collect();
    values.sort_by(|a, b| a.partial_cmp(b).expect("draw values are finite"));
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    };
    let sd = if n == 1 {
        0.0
    } else {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n as f64 - 1.0)).sqrt()
    };
    let quantile = |level: f64| values[order_statistic_k(n, level) - 1];
    Ok(BootstrapSummary {
        mean,
        median,
        sd,
        q1: quantile(0.01),
        q5: quantile(0.05),
        q95: quantile(0.95),
        q99: quantile(0.99),
        iterations: n as u64,
    })
}

/// Writes draws as `iteration,cumulative_return` rows with 6 fractional
/// digits, so identical runs produce byte-identical files.
pub fn write_draws_csv(path: &Path, draws: &[BootstrapDraw]) -> Result<()> {
    let mut out = String::from("iteration,cumulative_return\n");
    for draw in draws {
        out.push_str(&format!("{},{:.6}\n", draw.iteration, draw.cumulative_return));
    }
    fs::write(path, out)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct SummaryDoc {
    #[serde(flatten)]
    summary: BootstrapSummary,
    config: ConfigEcho,
}

#[derive(Serialize, Deserialize)]
struct ConfigEcho {
    n_mode: NMode,
    iterations: u64,
    transform: Transform,
    master_seed: u64,
}

/// Writes the summary JSON document with a config echo block.
pub fn write_summary_json(
    path: &Path,
    summary: &BootstrapSummary,
    cfg: &BootstrapConfig,
) -> Result<()> {
    let doc = SummaryDoc {
        summary: *summary,
        config: ConfigEcho {
            n_mode: cfg.n_mode,
            iterations: cfg.iterations,
            transform: cfg.transform,
            master_seed: cfg.master_seed,
        },
    };
    let mut json = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::Domain(format!("serialization failed: {e}")))?;
    json.push('\n');
    fs::write(path, json)?;
    Ok(())
}

// ==================== Tests ====================
