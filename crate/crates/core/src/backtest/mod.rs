//! Share-level portfolio simulation over a market history.
//!
//! A backtest holds fractional share positions, reweights them to ladder
//! targets on a configurable schedule, charges CPI-deflated admin fees plus
//! a half-spread on traded value, reinvests dividends, liquidates delisted
//! names, and reports daily value, return, and fee series. Bankruptcy (fees
//! exhausting the portfolio) is a terminal state, not an error.

pub mod report;

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marketdata::{CpiSeries, MarketHistory, Month, SecurityId};
use crate::metrics::{self, MetricsSummary, RiskParams};
use crate::weighting::{target_weights, TargetWeights, Transform};

/// Trades whose value falls below this fraction of portfolio value are
/// treated as float noise and not executed (no fee, no share change).
const TRADE_EPSILON: f64 = 1e-12;

/// Per-trade admin fee (quoted in 2015 dollars, deflated to the trade month)
/// and round-trip spread rate (half is charged on traded value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeeSchedule {
    pub admin_fee_2015: f64,
    pub spread_rate: f64,
}

impl Default for FeeSchedule {
    fn default() -> Self {
        Self { admin_fee_2015: 1.0, spread_rate: 0.001 }
    }
}

impl FeeSchedule {
    /// A schedule that charges nothing.
    pub const ZERO: FeeSchedule = FeeSchedule { admin_fee_2015: 0.0, spread_rate: 0.0 };

    pub fn validate(&self) -> Result<()> {
        if !(self.admin_fee_2015 >= 0.0 && self.admin_fee_2015.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "admin fee must be nonnegative, got {}",
                self.admin_fee_2015
            )));
        }
        if !(self.spread_rate >= 0.0 && self.spread_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "spread rate must be nonnegative, got {}",
                self.spread_rate
            )));
        }
        Ok(())
    }

    /// Admin fee for one trade executed in `month`, in that month's dollars.
    fn admin_unit(&self, month: Month, cpi: &CpiSeries) -> Result<f64> {
        if self.admin_fee_2015 == 0.0 {
            return Ok(0.0);
        }
        cpi.deflate(self.admin_fee_2015, month)
    }
}

/// How often the portfolio is traded back to target weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Daily,
    Monthly,
    Quarterly,
    Annual,
}

impl Frequency {
    pub const ALL: [Frequency; 4] =
        [Frequency::Daily, Frequency::Monthly, Frequency::Quarterly, Frequency::Annual];

    /// True when crossing from `prev` to `cur` starts a new rebalance period.
    fn crosses_boundary(self, prev: NaiveDate, cur: NaiveDate) -> bool {
        match self {
            Frequency::Daily => true,
            Frequency::Monthly => (cur.year(), cur.month()) != (prev.year(), prev.month()),
            Frequency::Quarterly => {
                (cur.year(), (cur.month() - 1) / 3) != (prev.year(), (prev.month() - 1) / 3)
            }
            Frequency::Annual => cur.year() != prev.year(),
        }
    }
}

impl std::fmt::Display for Frequency {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Frequency::Daily => "daily",
            Frequency::Monthly => "monthly",
            Frequency::Quarterly => "quarterly",
            Frequency::Annual => "annual",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Frequency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "daily" => Ok(Frequency::Daily),
            "monthly" => Ok(Frequency::Monthly),
            "quarterly" => Ok(Frequency::Quarterly),
            "annual" => Ok(Frequency::Annual),
            other => Err(Error::InvalidConfig(format!(
                "unknown rebalance frequency '{other}' (expected daily, monthly, quarterly, or annual)"
            ))),
        }
    }
}

/// Rebalance schedule plus the fee schedule applied at each rebalance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RebalancePolicy {
    pub frequency: Frequency,
    pub fee_schedule: FeeSchedule,
}

/// Portfolio snapshot at one day's close.
///
/// `value` equals marked holdings plus cash; cash never goes negative.
/// Holdings stay within the member set except for names delisted since the
/// last rebalance, which are liquidated the day they disappear.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioState {
    pub date: NaiveDate,
    pub holdings: BTreeMap<SecurityId, f64>,
    pub cash: f64,
    pub value: f64,
}

/// One run's parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub transform: Transform,
    pub policy: RebalancePolicy,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub initial_capital: f64,
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.start_date >= self.end_date {
            return Err(Error::InvalidConfig(format!(
                "start date {} must precede end date {}",
                self.start_date, self.end_date
            )));
        }
        if !(self.initial_capital > 0.0 && self.initial_capital.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "initial capital must be positive, got {}",
                self.initial_capital
            )));
        }
        self.policy.fee_schedule.validate()
    }
}

/// Fees charged at one day's close, split by kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeeRecord {
    pub date: NaiveDate,
    pub admin: f64,
    pub spread: f64,
}

impl FeeRecord {
    pub fn total(&self) -> f64 {
        self.admin + self.spread
    }
}

/// Cumulative fee totals for a run. `total` is the exact sum of the parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct FeeLedger {
    pub admin_total: f64,
    pub spread_total: f64,
    pub total: f64,
}

impl FeeLedger {
    fn add(&mut self, admin: f64, spread: f64) {
        self.admin_total += admin;
        self.spread_total += spread;
        self.total = self.admin_total + self.spread_total;
    }
}

/// Outcome of one rebalance: the post-trade state, the fees charged, and
/// whether fees exhausted the portfolio.
#[derive(Debug, Clone, PartialEq)]
pub struct Rebalanced {
    pub state: PortfolioState,
    pub fees: FeeRecord,
    pub bankrupt: bool,
}

/// Full output of one backtest run.
///
/// `daily_returns` are pre-fee portfolio returns; `daily_values` are
/// post-fee closes, so value[k+1] = value[k] * (1 + return[k+1]) - fees[k+1].
/// `monthly_returns` compound the daily series inside calendar months;
/// `annual_returns` are value-based year-over-year growth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub config: BacktestConfig,
    pub final_value: f64,
    pub bankrupt: bool,
    pub fee_ledger: FeeLedger,
    pub daily_values: Vec<(NaiveDate, f64)>,
    pub daily_returns: Vec<(NaiveDate, f64)>,
    pub monthly_returns: Vec<(Month, f64)>,
    pub annual_returns: Vec<(i32, f64)>,
    pub daily_fees: Vec<FeeRecord>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub metrics: Option<MetricsSummary>,
}

/// Weighted-average return over a common support: sum(w*r) / sum(w).
///
/// Invariant under uniform scaling of the weights, so raw position values
/// work as well as normalized weights.
pub fn index_return(
    weights: &BTreeMap<SecurityId, f64>,
    returns: &BTreeMap<SecurityId, f64>,
) -> Result<f64> {
    if weights.len() != returns.len()
        || !weights.keys().zip(returns.keys()).all(|(a, b)| a == b)
    {
        return Err(Error::SupportMismatch);
    }
    let mut num = 0.0;
    let mut denom = 0.0;
    for (id, w) in weights {
        if !(*w >= 0.0 && w.is_finite()) {
            return Err(Error::Domain(format!("security {id}: weight {w} is not usable")));
        }
        num += w * returns[id];
        denom += w;
    }
    if denom <= 0.0 {
        return Err(Error::Domain("total weight is zero".into()));
    }
    Ok(num / denom)
}

/// Trades a portfolio to target weights at the given closes and charges fees.
///
/// Target shares are formed on pre-fee value, then every position is scaled
/// down uniformly so the post-fee portfolio is fully invested (cash goes to
/// zero). Each security with a material share delta costs one deflated admin
/// fee plus half the spread rate on traded value. When total fees reach the
/// portfolio value the outcome is bankruptcy: everything is wiped to zero
/// and the full fee is still reported.
pub fn rebalance(
    state: &PortfolioState,
    targets: &TargetWeights,
    closes: &BTreeMap<SecurityId, f64>,
    fees: &FeeSchedule,
    cpi: &CpiSeries,
) -> Result<Rebalanced> {
    fees.validate()?;
    let close_of = |id: &SecurityId| -> Result<f64> {
        match closes.get(id) {
            Some(c) if *c > 0.0 && c.is_finite() => Ok(*c),
            Some(c) => Err(Error::Domain(format!("security {id}: close {c} is not usable"))),
            None => Err(Error::MissingRecord { security_id: id.to_string(), date: state.date }),
        }
    };

    let mut value = state.cash;
    for (id, shares) in &state.holdings {
        value += shares * close_of(id)?;
    }
    if !(value > 0.0) {
        return Err(Error::Domain(format!("portfolio value {value} is not positive")));
    }

    // Desired share counts on pre-fee value, then the trade list:
    // every currently held or targeted security with a material delta.
    let mut desired: BTreeMap<&SecurityId, f64> = BTreeMap::new();
    for (id, weight) in targets.iter() {
        desired.insert(id, weight * value / close_of(id)?);
    }

    let admin_unit = fees.admin_unit(Month::from_date(state.date), cpi)?;
    let mut admin = 0.0;
    let mut spread = 0.0;
    let ids: std::collections::BTreeSet<&SecurityId> =
        state.holdings.keys().chain(targets.weights().keys()).collect();
    for id in ids {
        let held = state.holdings.get(id).copied().unwrap_or(0.0);
        let want = desired.get(id).copied().unwrap_or(0.0);
        let traded_value = (want - held).abs() * close_of(id)?;
        if traded_value > value * TRADE_EPSILON {
            admin += admin_unit;
            spread += traded_value * fees.spread_rate / 2.0;
        }
    }

    let fee_record = FeeRecord { date: state.date, admin, spread };
    let fee_total = fee_record.total();
    if fee_total >= value {
        let state = PortfolioState {
            date: state.date,
            holdings: BTreeMap::new(),
            cash: 0.0,
            value: 0.0,
        };
        return Ok(Rebalanced { state, fees: fee_record, bankrupt: true });
    }

    let scale = (value - fee_total) / value;
    let holdings: BTreeMap<SecurityId, f64> =
        desired.into_iter().map(|(id, sh)| (id.clone(), sh * scale)).collect();
    let state = PortfolioState {
        date: state.date,
        holdings,
        cash: 0.0,
        value: value - fee_total,
    };
    Ok(Rebalanced { state, fees: fee_record, bankrupt: false })
}

/// Runs one strategy over the trading days inside the configured range.
///
/// Day one buys target weights at the close (with fees). Every later day the
/// portfolio drifts with total returns, dividends reinvest into the paying
/// security at its close, names whose price series ends are sold at their
/// last close (with fees), and period boundaries trigger a rebalance at the
/// close. The report carries one entry per trading day; on bankruptcy it is
/// truncated at the bankruptcy date with a zero final value.
pub fn run_backtest(
    h: &MarketHistory,
    cpi: &CpiSeries,
    cfg: &BacktestConfig,
) -> Result<BacktestReport> {
    cfg.validate()?;
    let days: Vec<NaiveDate> = h
        .calendar()
        .iter()
        .copied()
        .filter(|d| (cfg.start_date..=cfg.end_date).contains(d))
        .collect();
    if days.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "history has {} trading days between {} and {}; need at least 2",
            days.len(),
            cfg.start_date,
            cfg.end_date
        )));
    }
    let fees = &cfg.policy.fee_schedule;

    let mut daily_values = Vec::with_capacity(days.len());
    let mut daily_returns = Vec::with_capacity(days.len());
    let mut daily_fees = Vec::new();
    let mut ledger = FeeLedger::default();

    // Initial buy at the first close.
    let first = days[0];
    let seed_state = PortfolioState {
        date: first,
        holdings: BTreeMap::new(),
        cash: cfg.initial_capital,
        value: cfg.initial_capital,
    };
    let opening = rebalance(
        &seed_state,
        &target_weights(cfg.transform, &h.member_caps(first)?)?,
        &h.member_closes(first)?,
        fees,
        cpi,
    )?;
    let mut state = opening.state;
    let mut bankrupt = opening.bankrupt;
    daily_values.push((first, state.value));
    daily_returns.push((first, 0.0));
    if opening.fees.total() > 0.0 {
        ledger.add(opening.fees.admin, opening.fees.spread);
        daily_fees.push(opening.fees);
    }

    for pair in days.windows(2) {
        if bankrupt {
            break;
        }
        let (prev, today) = (pair[0], pair[1]);

        // Drift: reinvest dividends, mark live positions, liquidate the rest.
        let mut live: BTreeMap<SecurityId, f64> = BTreeMap::new();
        let mut live_value = 0.0;
        let mut proceeds = 0.0;
        let mut liq_admin = 0.0;
        let mut liq_spread = 0.0;
        for (id, shares) in &state.holdings {
            match h.record(id, today) {
                Some(rec) => {
                    let mut sh = *shares;
                    if rec.dividend > 0.0 {
                        sh *= 1.0 + rec.dividend / rec.close;
                    }
                    live_value += sh * rec.close;
                    live.insert(id.clone(), sh);
                }
                None => {
                    let last = h
                        .record(id, prev)
                        .ok_or_else(|| Error::MissingRecord {
                            security_id: id.to_string(),
                            date: prev,
                        })?;
                    let sale = shares * last.close;
                    proceeds += sale;
                    liq_admin += fees.admin_unit(Month::from_date(today), cpi)?;
                    liq_spread += sale * fees.spread_rate / 2.0;
                }
            }
        }

        let pre_fee_value = live_value + state.cash + proceeds;
        let daily_return = pre_fee_value / state.value - 1.0;
        let mut cash = state.cash + proceeds;
        let mut holdings = live;

        // Liquidation fees come out of cash; if cash cannot cover them the
        // remainder is raised by trimming every position pro rata.
        let liq_fee = liq_admin + liq_spread;
        if liq_fee <= cash {
            cash -= liq_fee;
        } else {
            let shortfall = liq_fee - cash;
            cash = 0.0;
            if shortfall >= live_value {
                bankrupt = true;
            } else {
                let scale = (live_value - shortfall) / live_value;
                for sh in holdings.values_mut() {
                    *sh *= scale;
                }
                live_value -= shortfall;
            }
        }

        let mut admin_today = liq_admin;
        let mut spread_today = liq_spread;
        state = PortfolioState { date: today, holdings, cash, value: live_value + cash };

        if !bankrupt && cfg.policy.frequency.crosses_boundary(prev, today) {
            let outcome = rebalance(
                &state,
                &target_weights(cfg.transform, &h.member_caps(today)?)?,
                &union_closes(h, &state, today)?,
                fees,
                cpi,
            )?;
            state = outcome.state;
            bankrupt = outcome.bankrupt;
            admin_today += outcome.fees.admin;
            spread_today += outcome.fees.spread;
        }

        if bankrupt {
            state.value = 0.0;
            state.cash = 0.0;
            state.holdings.clear();
        }
        daily_values.push((today, state.value));
        daily_returns.push((today, daily_return));
        if admin_today + spread_today > 0.0 {
            ledger.add(admin_today, spread_today);
            daily_fees.push(FeeRecord { date: today, admin: admin_today, spread: spread_today });
        }
    }

    let final_value = daily_values.last().expect("at least the first day is recorded").1;
    let annual_returns = annual_returns_from_values(&daily_values, cfg.initial_capital);
    let mut report = BacktestReport {
        config: cfg.clone(),
        final_value,
        bankrupt,
        fee_ledger: ledger,
        monthly_returns: metrics::compound_by_month(&daily_returns),
        annual_returns,
        daily_values,
        daily_returns,
        daily_fees,
        metrics: None,
    };
    attach_metrics(&mut report, &RiskParams::default());
    Ok(report)
}

/// Closes for every held or member security on `date`.
fn union_closes(
    h: &MarketHistory,
    state: &PortfolioState,
    date: NaiveDate,
) -> Result<BTreeMap<SecurityId, f64>> {
    let mut closes = h.member_closes(date)?;
    for id in state.holdings.keys() {
        if !closes.contains_key(id) {
            let rec = h
                .record(id, date)
                .ok_or_else(|| Error::MissingRecord { security_id: id.to_string(), date })?;
            closes.insert(id.clone(), rec.close);
        }
    }
    Ok(closes)
}

/// Calendar-year returns from a daily value series: each year's last close
/// over the prior year's last close, with the first year measured against
/// the starting capital.
pub fn annual_returns_from_values(
    daily_values: &[(NaiveDate, f64)],
    initial_capital: f64,
) -> Vec<(i32, f64)> {
    let mut out: Vec<(i32, f64)> = Vec::new();
    let mut prior = initial_capital;
    for (i, (date, value)) in daily_values.iter().enumerate() {
        let year = date.year();
        let last_of_year =
            i + 1 == daily_values.len() || daily_values[i + 1].0.year() != year;
        if last_of_year {
            out.push((year, value / prior - 1.0));
            prior = *value;
        }
    }
    out
}

/// Recomputes a report's annual series from its value series.
pub fn annualize_report(report: &BacktestReport) -> Vec<(i32, f64)> {
    annual_returns_from_values(&report.daily_values, report.config.initial_capital)
}

/// Recomputes the report's metrics block under the given risk parameters.
pub fn attach_metrics(report: &mut BacktestReport, params: &RiskParams) {
    let annual: Vec<f64> = report.annual_returns.iter().map(|(_, r)| *r).collect();
    report.metrics = Some(metrics::summarize_with_annual(
        &report.daily_returns,
        &annual,
        report.config.initial_capital,
        report.final_value,
        params,
    ));
}

// ==================== Tests ====================
