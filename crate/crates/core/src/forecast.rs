//! EWMA range forecasting, daily-to-5-minute scaling (ASF), and selection
//! of the candidate expected range closest to the scaled forecast.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DailySummary, IntervalBar};

/// Running EWMA value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EwmaState {
    pub lambda: f64,
    pub value: f64,
    pub history_len: usize,
}

/// Daily-range to mean-5-minute-range scaling factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsfFactor {
    pub value: f64,
    pub k: usize,
}

/// Smoothing factor from a half-life: lambda = 1 - e^(-ln2 / h).
pub fn lambda_from_half_life(h: f64) -> Result<f64> {
    if h <= 0.0 || h.is_nan() {
        return Err(Error::Parameter(format!("half-life must be positive, got {h}")));
    }
    Ok(1.0 - (-std::f64::consts::LN_2 / h).exp())
}

/// EWMA over `series` seeded with the first observation:
/// S_1 = X_1, S_t = lambda * X_t + (1 - lambda) * S_{t-1}.
pub fn ewma(series: &[f64], lambda: f64) -> Result<EwmaState> {
    if series.is_empty() {
        return Err(Error::EmptyInput("EWMA over empty series".into()));
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::Parameter(format!("lambda must be in (0, 1], got {lambda}")));
    }
    let mut value = series[0];
    for &x in &series[1..] {
        value = lambda * x + (1.0 - lambda) * value;
    }
    Ok(EwmaState { lambda, value, history_len: series.len() })
}

/// ASF over the look-back days: mean of daily range over mean 5-minute
/// range, day by day. `intervals[i]` must hold day i's 5-minute bars.
pub fn compute_asf(daily: &[DailySummary], intervals: &[&[IntervalBar]]) -> Result<AsfFactor> {
    if daily.is_empty() {
        return Err(Error::EmptyInput("ASF over zero days".into()));
    }
    if daily.len() != intervals.len() {
        return Err(Error::Parameter(format!(
            "ASF day count {} does not match interval-day count {}",
            daily.len(),
            intervals.len()
        )));
    }
    let mut total = 0.0;
    for (day, ivs) in daily.iter().zip(intervals) {
        if ivs.is_empty() {
            return Err(Error::EmptyInput(format!("day {} has no 5-minute bars", day.date)));
        }
        let mean_range = ivs.iter().map(|iv| iv.range).sum::<f64>() / ivs.len() as f64;
        if mean_range <= 0.0 || mean_range.is_nan() {
            return Err(Error::Domain(format!(
                "day {} has zero average 5-minute range",
                day.date
            )));
        }
        total += day.range / mean_range;
    }
    Ok(AsfFactor { value: total / daily.len() as f64, k: daily.len() })
}

/// Pick the candidate expected range closest to ewma_daily / asf.
/// Ties break toward the smaller k.
pub fn select_expected_range(
    ewma_daily: f64,
    asf: &AsfFactor,
    candidates: &BTreeMap<usize, f64>,
) -> Result<(usize, f64)> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("no expected-range candidates".into()));
    }
    if asf.value <= 0.0 || asf.value.is_nan() {
        return Err(Error::Parameter(format!("ASF must be positive, got {}", asf.value)));
    }
    let target = ewma_daily / asf.value;
    let mut best: Option<(usize, f64, f64)> = None;
    for (&k, &candidate) in candidates {
        let dist = (candidate - target).abs();
        let better = match best {
            Some((_, _, best_dist)) => dist < best_dist,
            None => true,
        };
        if better {
            best = Some((k, candidate, dist));
        }
    }
    let (k, value, _) = best.unwrap();
    Ok((k, value))
}

/// Serialized forecast for one target day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub date: NaiveDate,
    pub ewma_daily: f64,
    pub lambda: f64,
    pub half_life: f64,
    pub asf: f64,
    pub mapped_target: f64,
    pub chosen_k: usize,
    pub expected_range: f64,
}
