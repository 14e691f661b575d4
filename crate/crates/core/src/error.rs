//! Library-wide error type.

use chrono::NaiveDate;
use thiserror::Error;

use crate::marketdata::Month;

/// Convenience alias used across the library.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// A data file row that cannot be parsed. `row` is the 1-based line
    /// number in the file, counting the header.
    #[error("row {row}: {message}")]
    MalformedRow { row: u64, message: String },

    #[error("duplicate record for security {security_id} on {date}")]
    DuplicateRecord { security_id: String, date: NaiveDate },

    #[error("security {security_id} is missing {date} inside its record run")]
    NonContiguousRun { security_id: String, date: NaiveDate },

    #[error("CPI series is missing {0}")]
    MissingMonth(Month),

    #[error("month {0} is outside the CPI series range")]
    MonthOutOfRange(Month),

    #[error("no record for security {security_id} on {date}")]
    MissingRecord { security_id: String, date: NaiveDate },

    #[error("security {security_id} has no trading day before {date}")]
    NoPriorDay { security_id: String, date: NaiveDate },

    /// A value outside the mathematical domain of an operation.
    #[error("{0}")]
    Domain(String),

    #[error("empty universe: {0}")]
    EmptyUniverse(String),

    #[error("weight and return supports differ")]
    SupportMismatch,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("Sharpe ratio undefined: zero standard deviation")]
    ZeroVolatility,

    #[error("bootstrap iteration {iteration} failed: {source}")]
    Iteration { iteration: u64, source: Box<Error> },
}
