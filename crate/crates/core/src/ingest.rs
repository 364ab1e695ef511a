//! Minute-level OHLCV ingestion and aggregation to 5-minute and daily bars.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, FixedOffset, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "Datetime,Open,High,Low,Close,Adj Close,Volume";

/// One-minute OHLCV record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinuteBar {
    pub timestamp: DateTime<FixedOffset>,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub adj_close: f64,
    pub volume: u64,
}

/// 5-minute aggregate with the range decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalBar {
    pub timestamp: DateTime<FixedOffset>,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: u64,
    pub range: f64,
    pub range_up: f64,
    pub range_down: f64,
}

/// Single-day aggregate. Volume is stored as the mean minute volume,
/// matching the fractional daily volumes the pipeline consumes downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySummary {
    pub date: NaiveDate,
    pub open: f64,
    pub close: f64,
    pub high: f64,
    pub low: f64,
    pub avg_minute_volume: f64,
    pub range: f64,
}

/// Minute volume paired with the 5-minute range of its enclosing interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedObservation {
    pub timestamp: DateTime<FixedOffset>,
    pub volume: u64,
    pub range: f64,
}

/// Regular-session bounds applied when reading minute data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub open: NaiveTime,
    pub close: NaiveTime,
}

impl Default for Session {
    fn default() -> Self {
        Session {
            open: NaiveTime::from_hms_opt(9, 30, 0).unwrap(),
            close: NaiveTime::from_hms_opt(15, 59, 0).unwrap(),
        }
    }
}

impl Session {
    pub fn contains(&self, t: NaiveTime) -> bool {
        t >= self.open && t <= self.close
    }
}

/// Pluggable source of minute bars for live retrieval. The shipped
/// implementation is the CSV reader; network clients slot in behind this.
pub trait FetchClient {
    fn fetch(&self, symbol: &str, start: NaiveDate, end: NaiveDate) -> Result<Vec<MinuteBar>>;
}

fn parse_datetime(s: &str, line: usize) -> Result<DateTime<FixedOffset>> {
    let s = s.trim();
    for fmt in ["%Y-%m-%d %H:%M:%S%:z", "%Y-%m-%dT%H:%M:%S%:z"] {
        if let Ok(dt) = DateTime::parse_from_str(s, fmt) {
            return Ok(dt);
        }
    }
    // No offset: keep as parsed, pinned to +00:00.
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            let utc = FixedOffset::east_opt(0).unwrap();
            return Ok(naive.and_local_timezone(utc).unwrap());
        }
    }
    Err(Error::Parse {
        line,
        message: format!("unrecognized datetime {s:?}"),
    })
}

fn parse_field<T: std::str::FromStr>(s: &str, name: &str, line: usize) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {name} value {s:?}"),
    })
}

fn validate_bar(bar: &MinuteBar, line: usize) -> Result<()> {
    if bar.low > bar.high {
        return Err(Error::Validation {
            line,
            message: format!(
                "low {} exceeds high {} at {}",
                bar.low, bar.high, bar.timestamp
            ),
        });
    }
    let body_low = bar.open.min(bar.close);
    let body_high = bar.open.max(bar.close);
    if bar.low > body_low || bar.high < body_high {
        return Err(Error::Validation {
            line,
            message: format!(
                "OHLC inconsistent at {}: open {} high {} low {} close {}",
                bar.timestamp, bar.open, bar.high, bar.low, bar.close
            ),
        });
    }
    if !bar.open.is_finite() || !bar.high.is_finite() || !bar.low.is_finite() || !bar.close.is_finite()
    {
        return Err(Error::Validation {
            line,
            message: format!("non-finite price at {}", bar.timestamp),
        });
    }
    Ok(())
}

/// Read minute bars from a CSV file, keeping only rows inside `session`.
///
/// The header must match Appendix-1 column names exactly. Rows are returned
/// sorted by timestamp; duplicate timestamps are rejected.
pub fn read_minute_csv(path: &Path, session: Session) -> Result<Vec<MinuteBar>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_minute_reader(file, session)
}

/// Same as [`read_minute_csv`] but over any reader.
pub fn read_minute_reader<R: std::io::Read>(reader: R, session: Session) -> Result<Vec<MinuteBar>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let expected: Vec<&str> = CSV_HEADER.split(',').collect();
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("header mismatch: expected {expected:?}, got {got:?}"),
        });
    }

    let mut bars = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2; // header is line 1
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.len() != 7 {
            return Err(Error::Parse {
                line,
                message: format!("expected 7 fields, got {}", record.len()),
            });
        }
        let bar = MinuteBar {
            timestamp: parse_datetime(&record[0], line)?,
            open: parse_field(&record[1], "Open", line)?,
            high: parse_field(&record[2], "High", line)?,
            low: parse_field(&record[3], "Low", line)?,
            close: parse_field(&record[4], "Close", line)?,
            adj_close: parse_field(&record[5], "Adj Close", line)?,
            volume: parse_field(&record[6], "Volume", line)?,
        };
        validate_bar(&bar, line)?;
        if session.contains(bar.timestamp.time()) {
            bars.push(bar);
        }
    }
    if bars.is_empty() {
        return Err(Error::EmptyInput(
            "no minute bars inside the trading session".into(),
        ));
    }
    bars.sort_by_key(|b| b.timestamp);
    for pair in bars.windows(2) {
        if pair[0].timestamp == pair[1].timestamp {
            return Err(Error::Consistency(format!(
                "duplicate timestamp {}",
                pair[0].timestamp
            )));
        }
    }
    Ok(bars)
}

/// Start of the 5-minute bucket containing `ts` (wall-clock aligned).
pub fn bucket_start(ts: DateTime<FixedOffset>) -> DateTime<FixedOffset> {
    let minute = ts.minute() - ts.minute() % 5;
    ts.with_minute(minute)
        .unwrap()
        .with_second(0)
        .unwrap()
        .with_nanosecond(0)
        .unwrap()
}

fn check_sorted(bars: &[MinuteBar]) -> Result<()> {
    for pair in bars.windows(2) {
        if pair[1].timestamp < pair[0].timestamp {
            return Err(Error::Unsorted(format!(
                "{} follows {}",
                pair[1].timestamp, pair[0].timestamp
            )));
        }
    }
    Ok(())
}

/// Aggregate sorted minute bars into wall-clock-aligned 5-minute bars.
/// Buckets never span day boundaries; short tail buckets are kept.
pub fn aggregate_5min(bars: &[MinuteBar]) -> Result<Vec<IntervalBar>> {
    check_sorted(bars)?;
    let mut out: Vec<IntervalBar> = Vec::new();
    for bar in bars {
        let start = bucket_start(bar.timestamp);
        match out.last_mut() {
            Some(cur) if cur.timestamp == start => {
                cur.high = cur.high.max(bar.high);
                cur.low = cur.low.min(bar.low);
                cur.close = bar.close;
                cur.volume += bar.volume;
            }
            _ => out.push(IntervalBar {
                timestamp: start,
                open: bar.open,
                high: bar.high,
                low: bar.low,
                close: bar.close,
                volume: bar.volume,
                range: 0.0,
                range_up: 0.0,
                range_down: 0.0,
            }),
        }
    }
    for iv in &mut out {
        iv.range = iv.high - iv.low;
        iv.range_up = iv.high - iv.open;
        iv.range_down = iv.open - iv.low;
    }
    Ok(out)
}

/// Aggregate sorted minute bars into one summary per trading day.
pub fn aggregate_daily(bars: &[MinuteBar]) -> Result<Vec<DailySummary>> {
    check_sorted(bars)?;
    let mut days: Vec<DailySummary> = Vec::new();
    let mut counts: Vec<u64> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    for bar in bars {
        let date = bar.timestamp.date_naive();
        match days.last_mut() {
            Some(day) if day.date == date => {
                day.high = day.high.max(bar.high);
                day.low = day.low.min(bar.low);
                day.close = bar.close;
                *sums.last_mut().unwrap() += bar.volume as f64;
                *counts.last_mut().unwrap() += 1;
            }
            _ => {
                days.push(DailySummary {
                    date,
                    open: bar.open,
                    close: bar.close,
                    high: bar.high,
                    low: bar.low,
                    avg_minute_volume: 0.0,
                    range: 0.0,
                });
                sums.push(bar.volume as f64);
                counts.push(1);
            }
        }
    }
    for ((day, sum), count) in days.iter_mut().zip(sums).zip(counts) {
        day.avg_minute_volume = sum / count as f64;
        day.range = day.high - day.low;
    }
    Ok(days)
}

/// Pair each minute volume with the range of its enclosing 5-minute interval.
pub fn merge_volume_range(
    minute_bars: &[MinuteBar],
    interval_bars: &[IntervalBar],
) -> Result<Vec<MergedObservation>> {
    let ranges: BTreeMap<DateTime<FixedOffset>, f64> = interval_bars
        .iter()
        .map(|iv| (iv.timestamp, iv.range))
        .collect();
    minute_bars
        .iter()
        .map(|bar| {
            let start = bucket_start(bar.timestamp);
            let range = *ranges.get(&start).ok_or_else(|| {
                Error::Consistency(format!(
                    "minute bar {} has no enclosing 5-minute interval",
                    bar.timestamp
                ))
            })?;
            Ok(MergedObservation {
                timestamp: bar.timestamp,
                volume: bar.volume,
                range,
            })
        })
        .collect()
}

fn fmt_ts(ts: DateTime<FixedOffset>) -> String {
    ts.format("%Y-%m-%d %H:%M:%S%:z").to_string()
}

/// Write minute bars back out in the input CSV format.
pub fn write_minute_csv<W: Write>(w: &mut W, bars: &[MinuteBar]) -> Result<()> {
    let io_err = |source| Error::Io {
        path: "<minute csv>".into(),
        source,
    };
    writeln!(w, "{CSV_HEADER}").map_err(io_err)?;
    for b in bars {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt_ts(b.timestamp),
            b.open,
            b.high,
            b.low,
            b.close,
            b.adj_close,
            b.volume
        )
        .map_err(io_err)?;
    }
    Ok(())
}

/// Write 5-minute bars with the Appendix-2 column set.
pub fn write_interval_csv<W: Write>(w: &mut W, bars: &[IntervalBar]) -> Result<()> {
    let io_err = |source| Error::Io {
        path: "<interval csv>".into(),
        source,
    };
    writeln!(w, "Datetime,High,Low,Open,Close,Range,Range_Up,Range_Down").map_err(io_err)?;
    for b in bars {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            fmt_ts(b.timestamp),
            b.high,
            b.low,
            b.open,
            b.close,
            b.range,
            b.range_up,
            b.range_down
        )
        .map_err(io_err)?;
    }
    Ok(())
}

/// Write daily summaries with the Appendix-4 column set.
pub fn write_daily_csv<W: Write>(w: &mut W, days: &[DailySummary]) -> Result<()> {
    let io_err = |source| Error::Io {
        path: "<daily csv>".into(),
        source,
    };
    writeln!(w, "Datetime,High,Low,Open,Close,Volume,Range").map_err(io_err)?;
    for d in days {
        writeln!(
            w,
            "{} 00:00:00+00:00,{},{},{},{},{},{}",
            d.date, d.high, d.low, d.open, d.close, d.avg_minute_volume, d.range
        )
        .map_err(io_err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn bar(ts: &str, open: f64, high: f64, low: f64, close: f64, volume: u64) -> MinuteBar {
        MinuteBar {
            timestamp: parse_datetime(ts, 0).unwrap(),
            open,
            high,
            low,
            close,
            adj_close: close,
            volume,
        }
    }

    /// Appendix-1 sample rows.
    pub(crate) fn appendix1_bars() -> Vec<MinuteBar> {
        vec![
            bar("2024-10-22 09:30:00", 217.0635986, 217.2899933, 216.2299957, 216.2299957, 2144156),
            bar("2024-10-22 09:31:00", 216.2299957, 216.8099976, 215.8500061, 216.7962036, 658621),
            bar("2024-10-22 09:32:00", 216.6199951, 216.8300018, 215.8399963, 216.1741943, 416735),
            bar("2024-10-22 09:33:00", 216.25, 216.6298981, 216.0601044, 216.371994, 291416),
            bar("2024-10-22 09:34:00", 216.3999939, 216.8800049, 216.3800049, 216.6100006, 279045),
            bar("2024-10-22 09:35:00", 216.6549988, 217.3800049, 216.3000946, 217.1300049, 367297),
        ]
    }

    const APPENDIX1_CSV: &str = "\
Datetime,Open,High,Low,Close,Adj Close,Volume
2024-10-22 09:30:00,217.0635986,217.2899933,216.2299957,216.2299957,216.2299957,2144156
2024-10-22 09:31:00,216.2299957,216.8099976,215.8500061,216.7962036,216.7962036,658621
2024-10-22 09:32:00,216.6199951,216.8300018,215.8399963,216.1741943,216.1741943,416735
2024-10-22 09:33:00,216.25,216.6298981,216.0601044,216.371994,216.371994,291416
2024-10-22 09:34:00,216.3999939,216.8800049,216.3800049,216.6100006,216.6100006,279045
2024-10-22 09:35:00,216.6549988,217.3800049,216.3000946,217.1300049,217.1300049,367297
";

    #[test]
    fn reads_appendix1_rows() {
        let bars = read_minute_reader(APPENDIX1_CSV.as_bytes(), Session::default()).unwrap();
        assert_eq!(bars.len(), 6);
        assert_eq!(bars[0].open, 217.0635986);
        assert_eq!(bars[0].volume, 2144156);
        assert_eq!(bars[0].timestamp.time(), NaiveTime::from_hms_opt(9, 30, 0).unwrap());
    }

    #[test]
    fn header_only_is_empty_input() {
        let err = read_minute_reader(CSV_HEADER.as_bytes(), Session::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyInput(_)));
    }

    #[test]
    fn low_above_high_is_validation_error() {
        let csv = format!(
            "{CSV_HEADER}\n2024-10-22 09:30:00,217.5,217.0,218.0,217.5,217.5,1000\n"
        );
        let err = read_minute_reader(csv.as_bytes(), Session::default()).unwrap_err();
        match err {
            Error::Validation { line, .. } => assert_eq!(line, 2),
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = format!("{CSV_HEADER}\n2024-10-22 09:30:00,not-a-price,217,216,216.5,216.5,10\n");
        let err = read_minute_reader(csv.as_bytes(), Session::default()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn session_filter_drops_outside_rows() {
        let csv = format!(
            "{CSV_HEADER}\n2024-10-22 09:29:00,217,217,216,216.5,216.5,10\n2024-10-22 09:30:00,217,217,216,216.5,216.5,20\n2024-10-22 16:00:00,217,217,216,216.5,216.5,30\n"
        );
        let bars = read_minute_reader(csv.as_bytes(), Session::default()).unwrap();
        assert_eq!(bars.len(), 1);
        assert_eq!(bars[0].volume, 20);
    }

    #[test]
    fn duplicate_timestamps_rejected() {
        let csv = format!(
            "{CSV_HEADER}\n2024-10-22 09:30:00,217,217,216,216.5,216.5,10\n2024-10-22 09:30:00,217,217,216,216.5,216.5,20\n"
        );
        let err = read_minute_reader(csv.as_bytes(), Session::default()).unwrap_err();
        assert!(matches!(err, Error::Consistency(_)));
    }

    #[test]
    fn aggregates_appendix1_first_bucket() {
        let intervals = aggregate_5min(&appendix1_bars()).unwrap();
        assert_eq!(intervals.len(), 2);
        let iv = &intervals[0];
        assert_eq!(iv.high, 217.2899933);
        assert_eq!(iv.low, 215.8399963);
        assert_eq!(iv.open, 217.0635986);
        assert_eq!(iv.close, 216.6100006);
        assert_eq!(iv.volume, 3789973);
        assert!((iv.range - 1.449997).abs() < 1e-6);
        assert!((iv.range_up - 0.2263947).abs() < 1e-6);
        assert!((iv.range_down - 1.2236023).abs() < 1e-6);
    }

    #[test]
    fn singleton_bucket_equals_bar() {
        let b = bar("2024-10-22 10:00:00", 100.0, 101.0, 99.0, 100.5, 42);
        let intervals = aggregate_5min(std::slice::from_ref(&b)).unwrap();
        assert_eq!(intervals.len(), 1);
        assert_eq!(intervals[0].volume, 42);
        assert_eq!(intervals[0].range_up, b.high - b.open);
    }

    #[test]
    fn unsorted_input_errors() {
        let mut bars = appendix1_bars();
        bars.swap(0, 1);
        assert!(matches!(aggregate_5min(&bars), Err(Error::Unsorted(_))));
    }

    #[test]
    fn daily_summary_constant_day_zero_range() {
        let bars = vec![
            bar("2024-10-22 09:30:00", 100.0, 100.0, 100.0, 100.0, 10),
            bar("2024-10-22 09:31:00", 100.0, 100.0, 100.0, 100.0, 20),
        ];
        let days = aggregate_daily(&bars).unwrap();
        assert_eq!(days.len(), 1);
        assert_eq!(days[0].range, 0.0);
        assert_eq!(days[0].avg_minute_volume, 15.0);
    }

    #[test]
    fn two_days_two_summaries() {
        let bars = vec![
            bar("2024-10-22 09:30:00", 100.0, 101.0, 99.0, 100.5, 10),
            bar("2024-10-23 09:30:00", 102.0, 103.0, 101.0, 102.5, 20),
        ];
        assert_eq!(aggregate_daily(&bars).unwrap().len(), 2);
    }

    #[test]
    fn merge_carries_interval_range_to_each_minute() {
        let bars = appendix1_bars();
        let intervals = aggregate_5min(&bars).unwrap();
        let merged = merge_volume_range(&bars, &intervals).unwrap();
        assert_eq!(merged.len(), bars.len());
        for obs in &merged[..5] {
            assert!((obs.range - 1.449997).abs() < 1e-6);
        }
        let volumes: Vec<u64> = merged[..5].iter().map(|o| o.volume).collect();
        assert_eq!(volumes, vec![2144156, 658621, 416735, 291416, 279045]);
    }

    #[test]
    fn orphan_minute_is_consistency_error() {
        let bars = appendix1_bars();
        let intervals = aggregate_5min(&bars[..5]).unwrap();
        let err = merge_volume_range(&bars, &intervals).unwrap_err();
        assert!(matches!(err, Error::Consistency(_)));
    }

    #[test]
    fn interval_volume_conserved_per_day() {
        let bars = appendix1_bars();
        let intervals = aggregate_5min(&bars).unwrap();
        let minute_total: u64 = bars.iter().map(|b| b.volume).sum();
        let interval_total: u64 = intervals.iter().map(|iv| iv.volume).sum();
        assert_eq!(minute_total, interval_total);
    }
}
