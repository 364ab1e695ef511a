//! Child-order schedule construction from a day-ahead prediction.

use std::io::Write;

use chrono::{Duration, NaiveDate, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::backtest::Prediction;
use crate::error::{Error, Result};
use crate::ingest::Session;

/// One child order: interval start, quantity, and an informational limit
/// band around the previous close.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub interval_start: NaiveTime,
    pub quantity: u64,
    pub limit_low: f64,
    pub limit_high: f64,
}

/// Full-session schedule for one parent order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSchedule {
    pub target_date: NaiveDate,
    pub parent_quantity: u64,
    pub participation_cap: f64,
    pub slices: Vec<Slice>,
}

fn session_interval_starts(session: &Session) -> Vec<NaiveTime> {
    let mut starts = Vec::new();
    let mut t = NaiveTime::from_hms_opt(session.open.hour(), session.open.minute(), 0).unwrap();
    while t <= session.close {
        starts.push(t);
        t += Duration::minutes(5);
    }
    starts
}

/// Split `parent_quantity` across the session's 5-minute intervals:
/// equal-weight base allocation, clipped per interval at
/// `participation_cap * predicted_volume * 5`, residual spread left to
/// right over remaining capacity.
pub fn build_schedule(
    prediction: &Prediction,
    parent_quantity: u64,
    participation_cap: f64,
    session: &Session,
    previous_close: f64,
) -> Result<SliceSchedule> {
    if parent_quantity == 0 {
        return Err(Error::Parameter("parent quantity must be positive".into()));
    }
    if !(participation_cap > 0.0 && participation_cap <= 1.0) {
        return Err(Error::Parameter(format!(
            "participation cap must be in (0, 1], got {participation_cap}"
        )));
    }
    let starts = session_interval_starts(session);
    let n = starts.len() as u64;
    // predicted_volume is a per-minute level; a 5-minute interval holds
    // five minutes of it.
    let interval_cap = (participation_cap * prediction.predicted_volume * 5.0).floor() as u64;
    let capacity = interval_cap.saturating_mul(n);
    if capacity < parent_quantity {
        return Err(Error::InfeasibleSchedule {
            requested: parent_quantity,
            max_feasible: capacity,
        });
    }

    let base = parent_quantity / n;
    let mut quantities: Vec<u64> = vec![base.min(interval_cap); starts.len()];
    let mut residual = parent_quantity - quantities.iter().sum::<u64>();
    // Residual goes to the last slice first (integer-division remainder),
    // then spills left to right across remaining capacity.
    if residual > 0 {
        let last = quantities.len() - 1;
        let room = interval_cap - quantities[last];
        let add = residual.min(room);
        quantities[last] += add;
        residual -= add;
    }
    for q in quantities.iter_mut() {
        if residual == 0 {
            break;
        }
        let add = residual.min(interval_cap - *q);
        *q += add;
        residual -= add;
    }
    debug_assert_eq!(residual, 0);

    let half_band = prediction.expected_range_5min / 2.0;
    let slices = starts
        .into_iter()
        .zip(quantities)
        .map(|(interval_start, quantity)| Slice {
            interval_start,
            quantity,
            limit_low: previous_close - half_band,
            limit_high: previous_close + half_band,
        })
        .collect();
    Ok(SliceSchedule {
        target_date: prediction.target_date,
        parent_quantity,
        participation_cap,
        slices,
    })
}

impl SliceSchedule {
    /// Write `interval_start,quantity,limit_low,limit_high` CSV.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let io_err = |source| Error::Io { path: "<schedule csv>".into(), source };
        writeln!(w, "interval_start,quantity,limit_low,limit_high").map_err(io_err)?;
        for s in &self.slices {
            writeln!(
                w,
                "{},{},{},{}",
                s.interval_start.format("%H:%M:%S"),
                s.quantity,
                s.limit_low,
                s.limit_high
            )
            .map_err(io_err)?;
        }
        Ok(())
    }
}
