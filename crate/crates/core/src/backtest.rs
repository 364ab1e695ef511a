//! Rolling-window evaluation: re-fit everything on the trailing five
//! trading days, predict the next day's range and volume, score with MAPE.

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::binning::BinPolicy;
use crate::error::{Error, Result};
use crate::forecast::{compute_asf, ewma, lambda_from_half_life, select_expected_range};
use crate::ingest::{aggregate_5min, aggregate_daily, merge_volume_range, IntervalBar, MinuteBar};
use crate::mcmc::{
    expected_range_per_k_in, fit_sampled_volumes, mh_volume_chain, ChainConfig, RangeSweep,
};
use crate::seeds::mix_seed;
use crate::stats::{fit_mle, lognormal_mean, LogNormalParams};

pub const WINDOW_DAYS: usize = 5;

const VOLUME_CHAIN_SALT: u64 = 0x766f_6c75_6d65;

/// Knobs shared by prediction and backtesting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub half_life: f64,
    pub bin_policy: BinPolicy,
    pub k_min: usize,
    pub k_max: usize,
    pub chain: ChainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            half_life: 5.0,
            bin_policy: BinPolicy::EqualWidth,
            k_min: crate::binning::K_MIN,
            k_max: crate::binning::K_MAX,
            chain: ChainConfig::default(),
        }
    }
}

/// Sampler diagnostics carried alongside a prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDiagnostics {
    pub range_sweep: RangeSweep,
    pub volume_chain_acceptance: f64,
    pub conditioning_volume: f64,
}

/// One day's forecast: expected range at both scales plus the fitted
/// sampled-volume distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub target_date: NaiveDate,
    pub expected_range_5min: f64,
    pub mapped_daily_range: f64,
    pub predicted_volume: f64,
    pub chosen_k: usize,
    pub ewma_daily: f64,
    pub lambda: f64,
    pub asf: f64,
    pub volume_prior: LogNormalParams,
    pub sampled_volume_fit: LogNormalParams,
    pub diagnostics: PredictionDiagnostics,
}

/// One scored backtest day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub target_date: NaiveDate,
    pub predicted_volume: f64,
    pub actual_avg_volume: f64,
    pub predicted_range: f64,
    pub actual_ewma_range: f64,
    pub ape_volume: f64,
    pub ape_range: f64,
}

/// Full rolling-window report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub rows: Vec<EvaluationRow>,
    pub mape_volume: f64,
    pub mape_range: f64,
    pub window: usize,
    pub seed: u64,
    pub config: PipelineConfig,
}

fn group_by_day(bars: &[MinuteBar]) -> Vec<(NaiveDate, Vec<MinuteBar>)> {
    let mut days: Vec<(NaiveDate, Vec<MinuteBar>)> = Vec::new();
    for bar in bars {
        let date = bar.timestamp.date_naive();
        match days.last_mut() {
            Some((d, group)) if *d == date => group.push(bar.clone()),
            _ => days.push((date, vec![bar.clone()])),
        }
    }
    days
}

fn split_intervals_by_day(intervals: &[IntervalBar]) -> Vec<&[IntervalBar]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=intervals.len() {
        if i == intervals.len()
            || intervals[i].timestamp.date_naive() != intervals[start].timestamp.date_naive()
        {
            out.push(&intervals[start..i]);
            start = i;
        }
    }
    out
}

/// Run the full pipeline over one five-day window and produce the
/// prediction for `target_date`.
pub fn predict_day(
    history: &[MinuteBar],
    target_date: NaiveDate,
    cfg: &PipelineConfig,
) -> Result<Prediction> {
    let days = group_by_day(history);
    if days.len() != WINDOW_DAYS {
        return Err(Error::InsufficientHistory(format!(
            "window for {target_date} must hold exactly {WINDOW_DAYS} trading days, found {}: {:?}",
            days.len(),
            days.iter().map(|(d, _)| *d).collect::<Vec<_>>()
        )));
    }
    if days.iter().any(|(d, _)| *d >= target_date) {
        return Err(Error::Consistency(format!(
            "window contains {} which is not before target {target_date}",
            days.iter().map(|(d, _)| *d).find(|d| *d >= target_date).unwrap()
        )));
    }

    let intervals = aggregate_5min(history).map_err(|e| e.in_stage("aggregate_5min"))?;
    let daily = aggregate_daily(history).map_err(|e| e.in_stage("aggregate_daily"))?;
    let merged =
        merge_volume_range(history, &intervals).map_err(|e| e.in_stage("merge_volume_range"))?;

    let conditioning_volume =
        history.iter().map(|b| b.volume as f64).sum::<f64>() / history.len() as f64;

    let sweep = expected_range_per_k_in(
        &merged,
        conditioning_volume,
        &cfg.chain,
        cfg.bin_policy,
        cfg.k_min,
        cfg.k_max,
    )
    .map_err(|e| e.in_stage("expected_range_per_k"))?;

    let lambda = lambda_from_half_life(cfg.half_life).map_err(|e| e.in_stage("lambda"))?;
    let daily_ranges: Vec<f64> = daily.iter().map(|d| d.range).collect();
    let ewma_daily = ewma(&daily_ranges, lambda).map_err(|e| e.in_stage("ewma"))?.value;

    let per_day = split_intervals_by_day(&intervals);
    let asf = compute_asf(&daily, &per_day).map_err(|e| e.in_stage("compute_asf"))?;

    let (chosen_k, expected_range_5min) =
        select_expected_range(ewma_daily, &asf, &sweep.expected_ranges())
            .map_err(|e| e.in_stage("select_expected_range"))?;
    let mapped_daily_range = expected_range_5min * asf.value;

    let volumes: Vec<f64> = history.iter().map(|b| b.volume as f64).collect();
    let volume_prior = fit_mle(&volumes).map_err(|e| e.in_stage("volume_prior"))?;
    let volume_cfg = cfg.chain.with_seed(mix_seed(cfg.chain.seed, VOLUME_CHAIN_SALT));
    let volume_chain = mh_volume_chain(&volume_prior, expected_range_5min, &volume_cfg)
        .map_err(|e| e.in_stage("mh_volume_chain"))?;
    let sampled_volume_fit =
        fit_sampled_volumes(&volume_chain).map_err(|e| e.in_stage("fit_sampled_volumes"))?;
    let predicted_volume = lognormal_mean(&sampled_volume_fit);

    Ok(Prediction {
        target_date,
        expected_range_5min,
        mapped_daily_range,
        predicted_volume,
        chosen_k,
        ewma_daily,
        lambda,
        asf: asf.value,
        volume_prior,
        sampled_volume_fit,
        diagnostics: PredictionDiagnostics {
            range_sweep: sweep,
            volume_chain_acceptance: volume_chain.acceptance_rate,
            conditioning_volume,
        },
    })
}

/// Mean absolute percentage error: (100/n) * sum |A_i - F_i| / A_i.
pub fn mape(actuals: &[f64], forecasts: &[f64]) -> Result<f64> {
    if actuals.len() != forecasts.len() {
        return Err(Error::Parameter(format!(
            "MAPE length mismatch: {} actuals vs {} forecasts",
            actuals.len(),
            forecasts.len()
        )));
    }
    if actuals.is_empty() {
        return Err(Error::EmptyInput("MAPE over empty series".into()));
    }
    let mut total = 0.0;
    for (a, f) in actuals.iter().zip(forecasts) {
        if *a == 0.0 {
            return Err(Error::Domain("MAPE undefined for zero actual".into()));
        }
        total += (a - f).abs() / a;
    }
    Ok(100.0 * total / actuals.len() as f64)
}

fn days_since_epoch(date: NaiveDate) -> u64 {
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap();
    (date - epoch).num_days() as u64
}

/// Seed for one backtest window, derived from the master seed and the
/// target date so windows are independent but the run is reproducible.
pub fn window_seed(master: u64, target_date: NaiveDate) -> u64 {
    mix_seed(master, days_since_epoch(target_date))
}

/// Roll a five-day window across the dataset, predicting each following
/// day and scoring it against that day's realized volume and EWMA range.
pub fn run_backtest(all_bars: &[MinuteBar], cfg: &PipelineConfig) -> Result<BacktestReport> {
    let days = group_by_day(all_bars);
    if days.len() < WINDOW_DAYS + 1 {
        return Err(Error::InsufficientHistory(format!(
            "backtest needs at least {} trading days, found {}",
            WINDOW_DAYS + 1,
            days.len()
        )));
    }
    let lambda = lambda_from_half_life(cfg.half_life)?;
    let all_daily = aggregate_daily(all_bars)?;

    let mut rows = Vec::new();
    for target_idx in WINDOW_DAYS..days.len() {
        let (target_date, target_bars) = &days[target_idx];
        let window: Vec<MinuteBar> = days[target_idx - WINDOW_DAYS..target_idx]
            .iter()
            .flat_map(|(_, bars)| bars.iter().cloned())
            .collect();

        let mut window_cfg = cfg.clone();
        window_cfg.chain.seed = window_seed(cfg.chain.seed, *target_date);
        let prediction = predict_day(&window, *target_date, &window_cfg)?;

        let actual_avg_volume =
            target_bars.iter().map(|b| b.volume as f64).sum::<f64>() / target_bars.len() as f64;
        // Actual range: EWMA over the five days ending at and including
        // the target day, so the realized range enters as the last X_t.
        let ewma_window: Vec<f64> = all_daily[target_idx + 1 - WINDOW_DAYS..=target_idx]
            .iter()
            .map(|d| d.range)
            .collect();
        let actual_ewma_range = ewma(&ewma_window, lambda)?.value;

        let ape_volume = mape(&[actual_avg_volume], &[prediction.predicted_volume])?;
        let ape_range = mape(&[actual_ewma_range], &[prediction.mapped_daily_range])?;
        rows.push(EvaluationRow {
            target_date: *target_date,
            predicted_volume: prediction.predicted_volume,
            actual_avg_volume,
            predicted_range: prediction.mapped_daily_range,
            actual_ewma_range,
            ape_volume,
            ape_range,
        });
    }

    let mape_volume = rows.iter().map(|r| r.ape_volume).sum::<f64>() / rows.len() as f64;
    let mape_range = rows.iter().map(|r| r.ape_range).sum::<f64>() / rows.len() as f64;
    Ok(BacktestReport {
        rows,
        mape_volume,
        mape_range,
        window: WINDOW_DAYS,
        seed: cfg.chain.seed,
        config: cfg.clone(),
    })
}

/// Per-day predicted-vs-actual plot data.
pub fn write_plot_csv<W: Write>(
    w: &mut W,
    report: &BacktestReport,
    select: impl Fn(&EvaluationRow) -> (f64, f64),
) -> Result<()> {
    let io_err = |source| Error::Io { path: "<plot csv>".into(), source };
    writeln!(w, "date,predicted,actual").map_err(io_err)?;
    for row in &report.rows {
        let (predicted, actual) = select(row);
        writeln!(w, "{},{predicted},{actual}", row.target_date).map_err(io_err)?;
    }
    Ok(())
}
