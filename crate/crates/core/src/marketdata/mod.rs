//! Daily security panel, trading calendar, and CPI series.
//!
//! [`MarketHistory`] holds per-security daily records over a shared,
//! strictly increasing trading calendar. Every security's records form one
//! contiguous run of calendar dates: a listing that ends mid-history simply
//! stops having records (that is how delisting is represented). [`CpiSeries`]
//! is a gap-free monthly index used to express the fixed per-trade admin fee
//! in the dollars of any covered month.

mod files;
mod synthetic;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use files::{load_cpi, load_history, write_cpi_csv, write_history_csv};
pub use synthetic::{generate_synthetic, SynthConfig};

// ==================== SecurityId ====================

/// Identifier of one security, unique within a history.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SecurityId(String);

impl SecurityId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SecurityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SecurityId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

impl From<String> for SecurityId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

// ==================== Month ====================

/// A calendar month, formatted as `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Month {
    year: i32,
    month: u32,
}

impl Month {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Domain(format!("month must be 1..=12, got {month}")));
        }
        Ok(Self { year, month })
    }

    pub fn from_date(date: NaiveDate) -> Self {
        Self { year: date.year(), month: date.month() }
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month
    }

    pub fn next(self) -> Self {
        if self.month == 12 {
            Self { year: self.year + 1, month: 1 }
        } else {
            Self { year: self.year, month: self.month + 1 }
        }
    }

    /// Signed number of months from `start` to `self`.
    pub fn months_since(self, start: Month) -> i64 {
        i64::from(self.year - start.year) * 12 + i64::from(self.month) - i64::from(start.month)
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let invalid = || Error::Domain(format!("invalid month '{s}', expected YYYY-MM"));
        let (y, m) = s.split_once('-').ok_or_else(invalid)?;
        let year: i32 = y.parse().map_err(|_| invalid())?;
        let month: u32 = m.parse().map_err(|_| invalid())?;
        Month::new(year, month).map_err(|_| invalid())
    }
}

impl Serialize for Month {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Month {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

// ==================== SecurityDay ====================

/// One security's state on one trading day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityDay {
    pub security_id: SecurityId,
    pub date: NaiveDate,
    /// Closing price; strictly positive.
    pub close: f64,
    /// Shares outstanding; strictly positive.
    pub shares_outstanding: f64,
    /// Cash dividend per share paid that day; non-negative.
    pub dividend: f64,
    /// Whether the security counts as an index member that day.
    pub is_member: bool,
}

impl SecurityDay {
    fn validate(&self) -> Result<()> {
        let fail = |what: &str, v: f64| {
            Err(Error::Domain(format!(
                "security {} on {}: {what}, got {v}",
                self.security_id, self.date
            )))
        };
        if !self.close.is_finite() || self.close <= 0.0 {
            return fail("close must be positive and finite", self.close);
        }
        if !self.shares_outstanding.is_finite() || self.shares_outstanding <= 0.0 {
            return fail("shares_outstanding must be positive and finite", self.shares_outstanding);
        }
        if !self.dividend.is_finite() || self.dividend < 0.0 {
            return fail("dividend must be non-negative and finite", self.dividend);
        }
        Ok(())
    }
}

/// Per-day fields of a record, without the identifying key.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayData {
    pub close: f64,
    pub shares_outstanding: f64,
    pub dividend: f64,
    pub is_member: bool,
}

// ==================== MarketHistory ====================

#[derive(Debug, Clone)]
struct Track {
    id: SecurityId,
    /// Calendar index of the first record.
    start: usize,
    days: Vec<DayData>,
}

/// Validated panel of security-day records over a shared trading calendar.
#[derive(Debug, Clone)]
pub struct MarketHistory {
    calendar: Vec<NaiveDate>,
    date_index: HashMap<NaiveDate, usize>,
    tracks: Vec<Track>,
    id_index: BTreeMap<SecurityId, u32>,
    members_by_day: Vec<Vec<u32>>,
}

impl MarketHistory {
    /// Builds a history from records, validating every invariant: positive
    /// prices and share counts, no duplicate (security, date) pairs, and one
    /// contiguous run of calendar dates per security.
    pub fn from_records(records: Vec<SecurityDay>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyUniverse("history has no records".into()));
        }
        let mut per_security: BTreeMap<SecurityId, BTreeMap<NaiveDate, SecurityDay>> =
            BTreeMap::new();
        let mut dates: Vec<NaiveDate> = Vec::new();
        for record in records {
            record.validate()?;
            dates.push(record.date);
            let days = per_security.entry(record.security_id.clone()).or_default();
            if days.insert(record.date, record.clone()).is_some() {
                return Err(Error::DuplicateRecord {
                    security_id: record.security_id.to_string(),
                    date: record.date,
                });
            }
        }
        dates.sort_unstable();
        dates.dedup();
        let calendar = dates;
        let date_index: HashMap<NaiveDate, usize> =
            calendar.iter().enumerate().map(|(i, d)| (*d, i)).collect();

        let mut tracks = Vec::with_capacity(per_security.len());
        let mut id_index = BTreeMap::new();
        let mut members_by_day: Vec<Vec<u32>> = vec![Vec::new(); calendar.len()];
        for (id, days) in per_security {
            let start = date_index[days.keys().next().expect("nonempty track")];
            let ordinal = tracks.len() as u32;
            let mut data = Vec::with_capacity(days.len());
            for (offset, (date, day)) in days.iter().enumerate() {
                let expected_idx = start + offset;
                if date_index[date] != expected_idx {
                    return Err(Error::NonContiguousRun {
                        security_id: id.to_string(),
                        date: calendar[expected_idx],
                    });
                }
                if day.is_member {
                    members_by_day[expected_idx].push(ordinal);
                }
                data.push(DayData {
                    close: day.close,
                    shares_outstanding: day.shares_outstanding,
                    dividend: day.dividend,
                    is_member: day.is_member,
                });
            }
            id_index.insert(id.clone(), ordinal);
            tracks.push(Track { id, start, days: data });
        }
        Ok(Self { calendar, date_index, tracks, id_index, members_by_day })
    }

    /// Strictly increasing trading calendar covered by the records.
    pub fn calendar(&self) -> &[NaiveDate] {
        &self.calendar
    }

    /// First and last trading day.
    pub fn date_range(&self) -> (NaiveDate, NaiveDate) {
        (self.calendar[0], *self.calendar.last().expect("nonempty calendar"))
    }

    /// Position of a date within the calendar, if it is a trading day.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.date_index.get(&date).copied()
    }

    /// All security ids, in sorted order.
    pub fn securities(&self) -> impl Iterator<Item = &SecurityId> {
        self.id_index.keys()
    }

    /// The record for a security on a date, if one exists.
    pub fn record(&self, id: &SecurityId, date: NaiveDate) -> Option<DayData> {
        let ordinal = *self.id_index.get(id)?;
        let idx = self.index_of(date)?;
        self.rec(ordinal, idx)
    }

    /// Member securities on a trading day, in sorted id order.
    pub fn members_on(&self, date: NaiveDate) -> Result<Vec<&SecurityId>> {
        let idx = self
            .index_of(date)
            .ok_or_else(|| Error::Domain(format!("{date} is not a trading day in the history")))?;
        Ok(self.members_by_day[idx].iter().map(|&o| &self.tracks[o as usize].id).collect())
    }

    /// Market caps (close x shares outstanding) of the member set on a date.
    pub fn member_caps(&self, date: NaiveDate) -> Result<BTreeMap<SecurityId, f64>> {
        self.member_field(date, |d| d.close * d.shares_outstanding)
    }

    /// Closing prices of the member set on a date.
    pub fn member_closes(&self, date: NaiveDate) -> Result<BTreeMap<SecurityId, f64>> {
        self.member_field(date, |d| d.close)
    }

    fn member_field(
        &self,
        date: NaiveDate,
        field: impl Fn(&DayData) -> f64,
    ) -> Result<BTreeMap<SecurityId, f64>> {
        let idx = self
            .index_of(date)
            .ok_or_else(|| Error::Domain(format!("{date} is not a trading day in the history")))?;
        Ok(self.members_by_day[idx]
            .iter()
            .map(|&o| {
                let track = &self.tracks[o as usize];
                let day = &track.days[idx - track.start];
                (track.id.clone(), field(day))
            })
            .collect())
    }

    /// Market capitalization of a security on a date.
    pub fn market_cap(&self, id: &SecurityId, date: NaiveDate) -> Result<f64> {
        let day = self.record(id, date).ok_or_else(|| Error::MissingRecord {
            security_id: id.to_string(),
            date,
        })?;
        Ok(day.close * day.shares_outstanding)
    }

    /// Dividend-inclusive total return of a security over the trading day
    /// ending at `date`: `(close_t + dividend_t) / close_{t-1} - 1`, where
    /// `t-1` is the previous calendar date.
    pub fn total_return(&self, id: &SecurityId, date: NaiveDate) -> Result<f64> {
        let missing = || Error::MissingRecord { security_id: id.to_string(), date };
        let ordinal = *self.id_index.get(id).ok_or_else(missing)?;
        let idx = self.index_of(date).ok_or_else(missing)?;
        let current = self.rec(ordinal, idx).ok_or_else(missing)?;
        let prior = idx
            .checked_sub(1)
            .and_then(|prev| self.rec(ordinal, prev))
            .ok_or_else(|| Error::NoPriorDay { security_id: id.to_string(), date })?;
        Ok((current.close + current.dividend) / prior.close - 1.0)
    }

    // Index-based accessors for the simulation engines.

    pub(crate) fn rec(&self, ordinal: u32, idx: usize) -> Option<DayData> {
        let track = &self.tracks[ordinal as usize];
        idx.checked_sub(track.start).and_then(|offset| track.days.get(offset)).copied()
    }

    pub(crate) fn member_ordinals(&self, idx: usize) -> &[u32] {
        &self.members_by_day[idx]
    }

    #[cfg(test)]
    pub(crate) fn ordinal_of(&self, id: &SecurityId) -> Option<u32> {
        self.id_index.get(id).copied()
    }

    /// Every record as a flat, (id, date)-sorted vector.
    pub fn to_records(&self) -> Vec<SecurityDay> {
        let mut out = Vec::new();
        for track in &self.tracks {
            for (offset, day) in track.days.iter().enumerate() {
                out.push(SecurityDay {
                    security_id: track.id.clone(),
                    date: self.calendar[track.start + offset],
                    close: day.close,
                    shares_outstanding: day.shares_outstanding,
                    dividend: day.dividend,
                    is_member: day.is_member,
                });
            }
        }
        out
    }
}

// ==================== CpiSeries ====================

/// Gap-free monthly price-index series with strictly positive levels.
#[derive(Debug, Clone, PartialEq)]
pub struct CpiSeries {
    start: Month,
    levels: Vec<f64>,
}

impl CpiSeries {
    /// Month whose dollars the admin fee is quoted in.
    pub const ANCHOR: Month = Month { year: 2015, month: 12 };

    /// Builds a series from (month, level) entries, in any order.
    /// A missing month inside the covered range is an error naming that month.
    pub fn from_entries(mut entries: Vec<(Month, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyUniverse("CPI series has no entries".into()));
        }
        entries.sort_by_key(|(m, _)| *m);
        let start = entries[0].0;
        let mut levels = Vec::with_capacity(entries.len());
        let mut expected = start;
        for (month, level) in entries {
            if month == expected {
                if !level.is_finite() || level <= 0.0 {
                    return Err(Error::Domain(format!(
                        "CPI level for {month} must be positive and finite, got {level}"
                    )));
                }
                levels.push(level);
                expected = expected.next();
            } else if month < expected {
                return Err(Error::Domain(format!("duplicate CPI month {month}")));
            } else {
                return Err(Error::MissingMonth(expected));
            }
        }
        Ok(Self { start, levels })
    }

    /// First and last covered month.
    pub fn range(&self) -> (Month, Month) {
        let mut end = self.start;
        for _ in 1..self.levels.len() {
            end = end.next();
        }
        (self.start, end)
    }

    /// Index level for a month.
    pub fn level(&self, month: Month) -> Result<f64> {
        let offset = month.months_since(self.start);
        if offset < 0 || offset as usize >= self.levels.len() {
            return Err(Error::MonthOutOfRange(month));
        }
        Ok(self.levels[offset as usize])
    }

    /// Converts an amount quoted in anchor-month (2015-12) dollars into
    /// target-month dollars: `amount x level(target) / level(anchor)`.
    /// Both months must be covered by the series.
    pub fn deflate(&self, amount_2015: f64, target: Month) -> Result<f64> {
        let target_level = self.level(target)?;
        let anchor_level = self.level(Self::ANCHOR)?;
        Ok(amount_2015 * target_level / anchor_level)
    }
}

// ==================== Tests ====================
