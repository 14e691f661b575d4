//! CSV readers and writers for the security panel and the CPI series.
//!
//! Formats are plain comma-separated text with a header row and no quoting.
//! Parse errors name the 1-based line number (counting the header) and the
//! reason.

use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::marketdata::{CpiSeries, MarketHistory, Month, SecurityDay, SecurityId};

const HISTORY_HEADER: [&str; 6] =
    ["date", "security_id", "close", "shares_outstanding", "dividend", "member"];
const CPI_HEADER: [&str; 2] = ["month", "cpi"];

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::MalformedRow { row: 1, message: format!("{other:?}") },
        })
}

fn check_header(rdr: &mut csv::Reader<std::fs::File>, expected: &[&str]) -> Result<()> {
    let headers = rdr
        .headers()
        .map_err(|e| Error::MalformedRow { row: 1, message: e.to_string() })?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::MalformedRow {
            row: 1,
            message: format!("expected header {}, got {}", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn row_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn parse_field<T: FromStr>(record: &csv::StringRecord, index: usize, name: &str) -> Result<T> {
    let row = row_of(record);
    let raw = record
        .get(index)
        .ok_or_else(|| Error::MalformedRow { row, message: format!("missing {name}") })?;
    raw.parse().map_err(|_| Error::MalformedRow {
        row,
        message: format!("invalid {name} '{raw}'"),
    })
}

fn check_width(record: &csv::StringRecord, expected: usize) -> Result<()> {
    if record.len() != expected {
        return Err(Error::MalformedRow {
            row: row_of(record),
            message: format!("expected {expected} fields, got {}", record.len()),
        });
    }
    Ok(())
}

fn positive(record: &csv::StringRecord, name: &str, value: f64) -> Result<f64> {
    if !value.is_finite() || value <= 0.0 {
        return Err(Error::MalformedRow {
            row: row_of(record),
            message: format!("{name} must be positive, got {value}"),
        });
    }
    Ok(value)
}

/// Loads a security panel from a CSV file with columns
/// `date,security_id,close,shares_outstanding,dividend,member`.
pub fn load_history(path: impl AsRef<Path>) -> Result<MarketHistory> {
    let mut rdr = open_reader(path.as_ref())?;
    check_header(&mut rdr, &HISTORY_HEADER)?;
    let mut records = Vec::new();
    for item in rdr.records() {
        let record = item.map_err(|e| Error::MalformedRow {
            row: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        check_width(&record, 6)?;
        let date: NaiveDate = parse_field(&record, 0, "date")?;
        let security_id: String = parse_field(&record, 1, "security_id")?;
        if security_id.is_empty() {
            return Err(Error::MalformedRow {
                row: row_of(&record),
                message: "empty security_id".into(),
            });
        }
        let close = positive(&record, "close", parse_field(&record, 2, "close")?)?;
        let shares_outstanding = positive(
            &record,
            "shares_outstanding",
            parse_field(&record, 3, "shares_outstanding")?,
        )?;
        let dividend: f64 = parse_field(&record, 4, "dividend")?;
        if !dividend.is_finite() || dividend < 0.0 {
            return Err(Error::MalformedRow {
                row: row_of(&record),
                message: format!("dividend must be non-negative, got {dividend}"),
            });
        }
        let member_raw: String = parse_field(&record, 5, "member")?;
        let is_member = match member_raw.as_str() {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::MalformedRow {
                    row: row_of(&record),
                    message: format!("member must be 0 or 1, got '{other}'"),
                })
            }
        };
        records.push(SecurityDay {
            security_id: SecurityId::from(security_id),
            date,
            close,
            shares_outstanding,
            dividend,
            is_member,
        });
    }
    MarketHistory::from_records(records)
}

/// Loads a monthly CPI series from a CSV file with columns `month,cpi`.
/// Months may appear in any order but must be gap-free once sorted.
pub fn load_cpi(path: impl AsRef<Path>) -> Result<CpiSeries> {
    let mut rdr = open_reader(path.as_ref())?;
    check_header(&mut rdr, &CPI_HEADER)?;
    let mut entries = Vec::new();
    for item in rdr.records() {
        let record = item.map_err(|e| Error::MalformedRow {
            row: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        check_width(&record, 2)?;
        let month: Month = parse_field(&record, 0, "month")?;
        let level = positive(&record, "cpi", parse_field(&record, 1, "cpi")?)?;
        entries.push((month, level));
    }
    CpiSeries::from_entries(entries)
}

/// Writes a panel as `date,security_id,close,shares_outstanding,dividend,member`
/// rows sorted by (date, security_id), in the fixed format `load_history` reads.
pub fn write_history_csv(path: impl AsRef<Path>, history: &MarketHistory) -> Result<()> {
    let mut records = history.to_records();
    records.sort_by(|a, b| (a.date, &a.security_id).cmp(&(b.date, &b.security_id)));
    let mut out = String::new();
    out.push_str(&HISTORY_HEADER.join(","));
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{:.6},{:.0},{:.6},{}\n",
            r.date,
            r.security_id,
            r.close,
            r.shares_outstanding,
            r.dividend,
            u8::from(r.is_member),
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes a CPI series as `month,cpi` rows in ascending month order.
pub fn write_cpi_csv(path: impl AsRef<Path>, cpi: &CpiSeries) -> Result<()> {
    let (start, end) = cpi.range();
    let mut out = String::new();
    out.push_str(&CPI_HEADER.join(","));
    out.push('\n');
    let mut month = start;
    loop {
        out.push_str(&format!("{},{:.6}\n", month, cpi.level(month).expect("covered month")));
        if month == end {
            break;
        }
        month = month.next();
    }
    std::fs::write(path, out)?;
    Ok(())
}

// ==================== Tests ====================

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_temp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn loads_a_small_history() {
        let f = write_temp(
            "date,security_id,close,shares_outstanding,dividend,member\n\
             2015-12-30,A,10.0,1000000,0.0,1\n\
             2015-12-30,B,20.0,2000000,0.0,1\n\
             2015-12-31,A,10.5,1000000,0.25,1\n\
             2015-12-31,B,19.0,2000000,0.0,0\n",
        );
        let h = load_history(f.path()).unwrap();
        assert_eq!(h.calendar().len(), 2);
        assert_eq!(h.members_on("2015-12-31".parse().unwrap()).unwrap().len(), 1);
        let rec = h
            .record(&SecurityId::from("A"), "2015-12-31".parse().unwrap())
            .unwrap();
        assert_eq!(rec.dividend, 0.25);
    }

    #[test]
    fn rejects_wrong_header() {
        let f = write_temp("date,id,close\n2015-12-30,A,10.0\n");
        let err = load_history(f.path()).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 1, .. }), "{err}");
    }

    #[test]
    fn malformed_rows_name_the_line_number() {
        let header = "date,security_id,close,shares_outstanding,dividend,member\n";
        let cases = [
            ("2015-12-30,A,ten,1000,0.0,1\n", "close"),
            ("2015-12-30,A,10.0,-4,0.0,1\n", "shares_outstanding"),
            ("2015-12-30,A,10.0,1000,-0.5,1\n", "dividend"),
            ("2015-12-30,A,10.0,1000,0.0,yes\n", "member"),
            ("tomorrow,A,10.0,1000,0.0,1\n", "date"),
            ("2015-12-30,A,10.0,1000,0.0\n", "fields"),
            ("2015-12-30,A,0.0,1000,0.0,1\n", "close"),
        ];
        for (line, what) in cases {
            let f = write_temp(&format!("{header}2015-12-29,A,9.0,1000,0.0,1\n{line}"));
            match load_history(f.path()).unwrap_err() {
                Error::MalformedRow { row, message } => {
                    assert_eq!(row, 3, "{message}");
                    assert!(message.contains(what), "'{message}' should mention {what}");
                }
                other => panic!("unexpected error {other}"),
            }
        }
    }

    #[test]
    fn duplicate_pair_is_rejected_on_load() {
        let f = write_temp(
            "date,security_id,close,shares_outstanding,dividend,member\n\
             2015-12-30,A,10.0,1000,0.0,1\n\
             2015-12-30,A,11.0,1000,0.0,1\n",
        );
        assert!(matches!(load_history(f.path()).unwrap_err(), Error::DuplicateRecord { .. }));
    }

    #[test]
    fn loads_cpi_and_reports_gaps() {
        let f = write_temp("month,cpi\n1958-01,28.6\n1958-02,28.6\n1958-03,28.8\n");
        let cpi = load_cpi(f.path()).unwrap();
        assert_eq!(cpi.level("1958-03".parse().unwrap()).unwrap(), 28.8);

        let f = write_temp("month,cpi\n1958-01,28.6\n1958-03,28.8\n");
        match load_cpi(f.path()).unwrap_err() {
            Error::MissingMonth(m) => assert_eq!(m.to_string(), "1958-02"),
            other => panic!("unexpected error {other}"),
        }

        let f = write_temp("month,cpi\n1958-01,zero\n");
        assert!(matches!(load_cpi(f.path()).unwrap_err(), Error::MalformedRow { row: 2, .. }));
    }

    #[test]
    fn history_round_trips_through_csv() {
        let records = vec![
            SecurityDay {
                security_id: SecurityId::from("A"),
                date: "2015-12-30".parse().unwrap(),
                close: 10.125,
                shares_outstanding: 1_000_000.0,
                dividend: 0.0,
                is_member: true,
            },
            SecurityDay {
                security_id: SecurityId::from("A"),
                date: "2015-12-31".parse().unwrap(),
                close: 10.5,
                shares_outstanding: 1_000_000.0,
                dividend: 0.125,
                is_member: false,
            },
        ];
        let h = MarketHistory::from_records(records.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prices.csv");
        write_history_csv(&path, &h).unwrap();
        let reloaded = load_history(&path).unwrap();
        assert_eq!(reloaded.to_records(), records);
    }

    #[test]
    fn cpi_round_trips_through_csv() {
        let cpi = CpiSeries::from_entries(vec![
            ("2015-11".parse().unwrap(), 237.336),
            ("2015-12".parse().unwrap(), 236.525),
        ])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cpi.csv");
        write_cpi_csv(&path, &cpi).unwrap();
        assert_eq!(load_cpi(&path).unwrap(), cpi);
    }
}
