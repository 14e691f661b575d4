//! Summary statistics over return and value series.
//!
//! Provides compound annual growth, arithmetic mean and sample standard
//! deviation, Sharpe ratio, historical (empirical-quantile) VaR and cVaR,
//! per-year constituent growth counts, and the calendar compounding helpers
//! that turn a daily return series into monthly and annual ones. Everything
//! here is a pure function over immutable inputs.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marketdata::{MarketHistory, Month};

/// Sampling frequency of a return series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Horizon {
    Daily,
    Monthly,
    Annual,
}

impl std::fmt::Display for Horizon {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Horizon::Daily => "daily",
            Horizon::Monthly => "monthly",
            Horizon::Annual => "annual",
        };
        f.write_str(s)
    }
}

/// An ordered series of fractional returns at a fixed horizon.
///
/// Every value is finite and greater than -1, so compounding factors
/// (1 + r) stay positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    horizon: Horizon,
    values: Vec<f64>,
}

impl ReturnSeries {
    /// Validates and wraps a return series.
    pub fn new(horizon: Horizon, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("return series is empty".into()));
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() || *v <= -1.0 {
                return Err(Error::Domain(format!(
                    "return at position {i} is {v}; returns must be finite and > -1"
                )));
            }
        }
        Ok(Self { horizon, values })
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Risk-free rate and VaR level used by the risk statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskParams {
    pub risk_free_rate: f64,
    pub var_level: f64,
}

impl Default for RiskParams {
    fn default() -> Self {
        Self { risk_free_rate: 0.0175, var_level: 0.05 }
    }
}

impl RiskParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.var_level > 0.0 && self.var_level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "var_level must lie in (0, 1), got {}",
                self.var_level
            )));
        }
        if !(self.risk_free_rate >= 0.0 && self.risk_free_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "risk_free_rate must be a nonnegative number, got {}",
                self.risk_free_rate
            )));
        }
        Ok(())
    }
}

/// Growth thresholds used by [`growth_counts`]: +50%, +100%, +200%.
pub const GROWTH_THRESHOLDS: [f64; 3] = [0.5, 1.0, 2.0];

/// Compound annual growth rate: (final/initial)^(1/years) - 1.
pub fn cagr(initial: f64, final_value: f64, years: f64) -> Result<f64> {
    if !(initial > 0.0 && initial.is_finite()) {
        return Err(Error::Domain(format!("initial value must be positive, got {initial}")));
    }
    if !(final_value >= 0.0 && final_value.is_finite()) {
        return Err(Error::Domain(format!("final value must be nonnegative, got {final_value}")));
    }
    if !(years > 0.0 && years.is_finite()) {
        return Err(Error::Domain(format!("years must be positive, got {years}")));
    }
    Ok((final_value / initial).powf(1.0 / years) - 1.0)
}

/// Arithmetic mean and sample standard deviation (n-1 denominator).
pub fn mean_sd(s: &ReturnSeries) -> Result<(f64, f64)> {
    let n = s.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let mean = arithmetic_mean(s.values());
    let ss: f64 = s.values().iter().map(|v| (v - mean).powi(2)).sum();
    Ok((mean, (ss / (n as f64 - 1.0)).sqrt()))
}

/// Sharpe ratio of an annual return series: (mean - risk_free) / sd.
pub fn sharpe(s: &ReturnSeries, params: &RiskParams) -> Result<f64> {
    params.validate()?;
    if s.horizon() != Horizon::Annual {
        return Err(Error::Domain(format!(
            "Sharpe ratio requires annual returns, got {} series",
            s.horizon()
        )));
    }
    let (mean, sd) = mean_sd(s)?;
    if sd == 0.0 {
        return Err(Error::ZeroVolatility);
    }
    Ok((mean - params.risk_free_rate) / sd)
}

/// Historical value at risk: the k-th smallest return, k = ceil(level * n).
///
/// Lower empirical order statistic, no interpolation. Reported as a return,
/// typically negative.
pub fn var(s: &ReturnSeries, level: f64) -> Result<f64> {
    let tail = tail_returns(s, level)?;
    Ok(*tail.last().expect("tail holds at least one return"))
}

/// Expected shortfall: arithmetic mean of the k smallest returns.
pub fn cvar(s: &ReturnSeries, level: f64) -> Result<f64> {
    let tail = tail_returns(s, level)?;
    Ok(arithmetic_mean(&tail))
}

/// The k = ceil(level * n) smallest returns, ascending.
fn tail_returns(s: &ReturnSeries, level: f64) -> Result<Vec<f64>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("quantile level must lie in (0, 1), got {level}")));
    }
    let mut sorted = s.values().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("series values are finite"));
    sorted.truncate(order_statistic_k(sorted.len(), level));
    Ok(sorted)
}

/// Rank of the lower empirical quantile: k = ceil(level * n), clamped to 1..=n.
///
/// The 1e-9 slack keeps binary rounding of level * n (e.g. 0.05 * 40) from
/// bumping an exact integer product up one order statistic.
pub(crate) fn order_statistic_k(n: usize, level: f64) -> usize {
    ((level * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

/// Counts member securities whose close-to-close calendar-year price growth
/// met each threshold. Dividends are excluded; this measures price moves.
///
/// A security counts only if it has a record and is a member on both the
/// first and last trading day of the year.
pub fn growth_counts(h: &MarketHistory, year: i32, thresholds: &[f64]) -> Result<Vec<usize>> {
    let mut days = h.calendar().iter().filter(|d| d.year() == year);
    let first = *days
        .next()
        .ok_or_else(|| Error::Domain(format!("history has no trading days in {year}")))?;
    let last = days.next_back().copied().unwrap_or(first);

    let mut counts = vec![0usize; thresholds.len()];
    for id in h.securities() {
        let (Some(open), Some(close)) = (h.record(id, first), h.record(id, last)) else {
            continue;
        };
        if !(open.is_member && close.is_member) {
            continue;
        }
        let growth = close.close / open.close - 1.0;
        for (slot, threshold) in counts.iter_mut().zip(thresholds) {
            if growth >= *threshold {
                *slot += 1;
            }
        }
    }
    Ok(counts)
}

/// Compounds a daily return series into calendar-month returns.
pub fn compound_by_month(days: &[(NaiveDate, f64)]) -> Vec<(Month, f64)> {
    compound_buckets(days, |date| Month::from_date(date))
}

/// Compounds a daily return series into calendar-year returns.
pub fn compound_by_year(days: &[(NaiveDate, f64)]) -> Vec<(i32, f64)> {
    compound_buckets(days, |date| date.year())
}

fn compound_buckets<K: PartialEq + Copy>(
    days: &[(NaiveDate, f64)],
    key: impl Fn(NaiveDate) -> K,
) -> Vec<(K, f64)> {
    let mut out: Vec<(K, f64)> = Vec::new();
    for (date, r) in days {
        let k = key(*date);
        match out.last_mut() {
            Some((prev, acc)) if *prev == k => *acc *= 1.0 + r,
            _ => out.push((k, 1.0 + r)),
        }
    }
    for (_, acc) in &mut out {
        *acc -= 1.0;
    }
    out
}

/// The full metrics block of a run report.
///
/// Fields are individually optional: a statistic whose preconditions fail
/// (too few observations, zero volatility) is omitted rather than reported
/// as a placeholder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricsSummary {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cagr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_annual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sd_annual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sharpe: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub var_annual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub var_monthly: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub var_daily: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cvar_annual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cvar_monthly: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cvar_daily: Option<f64>,
}

/// Summarizes a run from its daily returns and an explicit annual series.
///
/// `annual` is supplied separately because value-based reports define annual
/// returns from year-end values, which differs from compounding the daily
/// series when fees are charged.
pub fn summarize_with_annual(
    days: &[(NaiveDate, f64)],
    annual: &[f64],
    initial: f64,
    final_value: f64,
    params: &RiskParams,
) -> MetricsSummary {
    let mut out = MetricsSummary::default();

    if let (Some((first, _)), Some((last, _))) = (days.first(), days.last()) {
        let years = (*last - *first).num_days() as f64 / 365.25;
        out.cagr = cagr(initial, final_value, years).ok();
    }

    if let Ok(series) = ReturnSeries::new(Horizon::Annual, annual.to_vec()) {
        if let Ok((mean, sd)) = mean_sd(&series) {
            out.mean_annual = Some(mean);
            out.sd_annual = Some(sd);
        }
        out.sharpe = sharpe(&series, params).ok();
        out.var_annual = var(&series, params.var_level).ok();
        out.cvar_annual = cvar(&series, params.var_level).ok();
    }

    let monthly: Vec<f64> = compound_by_month(days).into_iter().map(|(_, r)| r).collect();
    if let Ok(series) = ReturnSeries::new(Horizon::Monthly, monthly) {
        out.var_monthly = var(&series, params.var_level).ok();
        out.cvar_monthly = cvar(&series, params.var_level).ok();
    }

    let daily: Vec<f64> = days.iter().map(|(_, r)| *r).collect();
    if let Ok(series) = ReturnSeries::new(Horizon::Daily, daily) {
        out.var_daily = var(&series, params.var_level).ok();
        out.cvar_daily = cvar(&series, params.var_level).ok();
    }

    out
}

/// Summarizes a bare daily return series, deriving annual returns by
/// calendar-year compounding and growth from a notional starting value of 1.
pub fn summarize_daily(days: &[(NaiveDate, f64)], params: &RiskParams) -> MetricsSummary {
    let annual: Vec<f64> = compound_by_year(days).into_iter().map(|(_, r)| r).collect();
    let growth: f64 = days.iter().map(|(_, r)| 1.0 + r).product();
    summarize_with_annual(days, &annual, 1.0, growth, params)
}

fn arithmetic_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

// ==================== Tests ====================
