//! Deterministic synthetic security panels.
//!
//! Prices follow per-security geometric random walks with drift and
//! volatility drawn once per listing from configured ranges. Dividends are
//! paid quarterly (first trading day of March, June, September, December) at
//! a quarter of the listing's annual yield applied to the prior close.
//! Membership churn replaces a uniformly chosen member with a fresh listing,
//! keeping the member count constant.
//!
//! The trading calendar is the first 252 weekdays of each calendar year, so
//! every month's first trading day is its first weekday. The horizon always
//! ends with calendar year 2015 (`start year = 2016 - n_years`); a CPI series
//! covering the horizon therefore always contains the 2015-12 fee anchor.
//!
//! Identical configs produce bit-identical histories.

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marketdata::{MarketHistory, SecurityDay, SecurityId};

pub(crate) const TRADING_DAYS_PER_YEAR: usize = 252;
const FINAL_YEAR: i32 = 2015;
const DIVIDEND_MONTHS: [u32; 4] = [3, 6, 9, 12];

/// Configuration for [`generate_synthetic`]. Ranges are inclusive
/// `(low, high)` pairs sampled uniformly per listing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_securities: usize,
    pub n_years: u32,
    /// Annualized drift range of the log-price walk.
    pub drift_range: (f64, f64),
    /// Annualized volatility range; a zero-width `(0, 0)` range produces
    /// deterministic exponential (or constant) price paths.
    pub volatility_range: (f64, f64),
    /// Annualized dividend yield range.
    pub dividend_yield_range: (f64, f64),
    /// Expected number of member replacements per year.
    pub membership_churn_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_securities: 50,
            n_years: 10,
            drift_range: (0.02, 0.10),
            volatility_range: (0.10, 0.35),
            dividend_yield_range: (0.0, 0.03),
            membership_churn_rate: 2.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_securities == 0 {
            return bad("n_securities must be at least 1".into());
        }
        if self.n_years == 0 {
            return bad("n_years must be at least 1".into());
        }
        for (name, (lo, hi)) in [
            ("drift_range", self.drift_range),
            ("volatility_range", self.volatility_range),
            ("dividend_yield_range", self.dividend_yield_range),
        ] {
            if !lo.is_finite() || !hi.is_finite() || lo < 0.0 || lo > hi {
                return bad(format!("{name} must satisfy 0 <= low <= high, got ({lo}, {hi})"));
            }
        }
        if !self.membership_churn_rate.is_finite() || self.membership_churn_rate < 0.0 {
            return bad(format!(
                "membership_churn_rate must be non-negative, got {}",
                self.membership_churn_rate
            ));
        }
        Ok(())
    }
}

/// The synthetic trading calendar: the first 252 weekdays of each of the
/// `n_years` calendar years ending with 2015.
pub(crate) fn synthetic_calendar(n_years: u32) -> Vec<NaiveDate> {
    let start_year = FINAL_YEAR - n_years as i32 + 1;
    let mut calendar = Vec::with_capacity(n_years as usize * TRADING_DAYS_PER_YEAR);
    for year in start_year..=FINAL_YEAR {
        let mut date = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year start");
        let mut taken = 0;
        while taken < TRADING_DAYS_PER_YEAR {
            if !matches!(date.weekday(), Weekday::Sat | Weekday::Sun) {
                calendar.push(date);
                taken += 1;
            }
            date = date.succ_opt().expect("calendar date overflow");
        }
    }
    calendar
}

struct Listing {
    id: SecurityId,
    drift: f64,
    volatility: f64,
    annual_yield: f64,
    shares_outstanding: f64,
    price: f64,
    /// Dividend per share going into today's record; set during the day step.
    pending_dividend: f64,
}

fn draw_range(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn spawn(rng: &mut ChaCha8Rng, cfg: &SynthConfig, counter: &mut usize) -> Listing {
    let drift = draw_range(rng, cfg.drift_range);
    let volatility = draw_range(rng, cfg.volatility_range);
    let annual_yield = draw_range(rng, cfg.dividend_yield_range);
    let shares_outstanding = 10f64.powf(draw_range(rng, (6.0, 9.0))).round();
    let price = draw_range(rng, (10.0, 100.0));
    let id = SecurityId::from(format!("S{:04}", *counter));
    *counter += 1;
    Listing {
        id,
        drift,
        volatility,
        annual_yield,
        shares_outstanding,
        price,
        pending_dividend: 0.0,
    }
}

/// Generates a panel as a pure function of the config: identical configs
/// yield bit-identical histories.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<MarketHistory> {
    cfg.validate()?;
    let calendar = synthetic_calendar(cfg.n_years);
    let dt = 1.0 / TRADING_DAYS_PER_YEAR as f64;
    let daily_churn = cfg.membership_churn_rate * dt;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut counter = 0usize;
    let mut members: Vec<Listing> =
        (0..cfg.n_securities).map(|_| spawn(&mut rng, cfg, &mut counter)).collect();
    let mut records = Vec::with_capacity(calendar.len() * cfg.n_securities);

    for (t, date) in calendar.iter().enumerate() {
        if t > 0 {
            let pays_dividends = DIVIDEND_MONTHS.contains(&date.month())
                && calendar[t - 1].month() != date.month();
            let replace = rng.random::<f64>() < daily_churn;
            if replace {
                let victim = rng.random_range(0..members.len());
                members.remove(victim);
            }
            for listing in &mut members {
                let prior_close = listing.price;
                let z: f64 = rng.sample(StandardNormal);
                let step = (listing.drift - 0.5 * listing.volatility * listing.volatility) * dt
                    + listing.volatility * dt.sqrt() * z;
                listing.price *= step.exp();
                listing.pending_dividend =
                    if pays_dividends { prior_close * listing.annual_yield / 4.0 } else { 0.0 };
            }
            if replace {
                members.push(spawn(&mut rng, cfg, &mut counter));
            }
        }
        for listing in &members {
            records.push(SecurityDay {
                security_id: listing.id.clone(),
                date: *date,
                close: listing.price,
                shares_outstanding: listing.shares_outstanding,
                dividend: listing.pending_dividend,
                is_member: true,
            });
        }
    }
    MarketHistory::from_records(records)
}

// ==================== Tests ====================
