//! Range binning, per-bin log-normal volume fits, and bin-count selection.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::MergedObservation;
use crate::stats::{fit_mle, lognormal_mean, LogNormalParams};

pub const K_MIN: usize = 5;
pub const K_MAX: usize = 10;
const MIN_BIN_OBS: usize = 3;

/// How bin edges are placed over the observed range span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum BinPolicy {
    #[default]
    EqualWidth,
    Quantile,
}

/// One range bin with its fitted volume distribution and the raw
/// (range, volume) pairs assigned to it, sorted by range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeBin {
    pub lower: f64,
    pub upper: f64,
    pub volume_params: LogNormalParams,
    pub observations: Vec<(f64, f64)>,
    pub observed_mean_volume: f64,
}

impl RangeBin {
    /// Volume paired with the observed range closest to `r`.
    /// Equidistant ties resolve to the lower range value.
    pub fn closest_volume(&self, r: f64) -> f64 {
        debug_assert!(!self.observations.is_empty());
        let idx = self.observations.partition_point(|(range, _)| *range < r);
        let mut best = if idx == 0 { 0 } else { idx - 1 };
        let mut best_dist = (self.observations[best].0 - r).abs();
        for i in idx..self.observations.len().min(idx + 1) {
            let d = (self.observations[i].0 - r).abs();
            if d < best_dist || (d == best_dist && self.observations[i].0 < self.observations[best].0)
            {
                best = i;
                best_dist = d;
            }
        }
        self.observations[best].1
    }
}

/// Fitted model for one bin-count configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedModel {
    pub k: usize,
    pub edges: Vec<f64>,
    pub bins: Vec<RangeBin>,
    pub range_prior: LogNormalParams,
    pub volume_prior: LogNormalParams,
    pub discrepancy: f64,
    pub span_start: NaiveDate,
    pub span_end: NaiveDate,
}

fn equal_width_edges(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..=k)
        .map(|i| lo + (hi - lo) * i as f64 / k as f64)
        .collect()
}

fn quantile_edges(sorted: &[f64], k: usize) -> Vec<f64> {
    let n = sorted.len();
    (0..=k)
        .map(|i| {
            if i == 0 {
                sorted[0]
            } else if i == k {
                sorted[n - 1]
            } else {
                sorted[(i * n / k).min(n - 1)]
            }
        })
        .collect()
}

/// Index of the bin containing `value`; out-of-span values clamp to the
/// outermost bins and the global maximum falls in the last bin.
pub fn bin_index(edges: &[f64], value: f64) -> usize {
    let k = edges.len() - 1;
    if value < edges[0] {
        return 0;
    }
    if value >= edges[k] {
        return k - 1;
    }
    // partition_point gives the first edge > value; bin is one left of it.
    let idx = edges.partition_point(|e| *e <= value);
    (idx - 1).min(k - 1)
}

/// The bin of `model` containing `range_value` (clamping at the span ends).
pub fn bin_of(model: &BinnedModel, range_value: f64) -> &RangeBin {
    &model.bins[bin_index(&model.edges, range_value)]
}

/// Observation-share-weighted absolute error between fitted and observed
/// per-bin mean volumes.
pub fn discrepancy(bins: &[RangeBin]) -> f64 {
    let total: usize = bins.iter().map(|b| b.observations.len()).sum();
    bins.iter()
        .map(|b| {
            let w = b.observations.len() as f64 / total as f64;
            w * (lognormal_mean(&b.volume_params) - b.observed_mean_volume).abs()
        })
        .sum()
}

/// Build a `BinnedModel` with `k` bins under the given edge policy.
pub fn build_model(
    observations: &[MergedObservation],
    k: usize,
    policy: BinPolicy,
) -> Result<BinnedModel> {
    if observations.is_empty() {
        return Err(Error::EmptyInput("no observations to bin".into()));
    }
    if !(K_MIN..=K_MAX).contains(&k) {
        return Err(Error::Parameter(format!(
            "bin count {k} outside {K_MIN}..={K_MAX}"
        )));
    }

    let mut ranges: Vec<f64> = observations.iter().map(|o| o.range).collect();
    ranges.sort_by(|a, b| a.total_cmp(b));
    let (lo, hi) = (ranges[0], ranges[ranges.len() - 1]);
    let edges = match policy {
        BinPolicy::EqualWidth => equal_width_edges(lo, hi, k),
        BinPolicy::Quantile => quantile_edges(&ranges, k),
    };
    for pair in edges.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::BinSparsity(format!(
                "degenerate edge pair [{}, {}] for k = {k}",
                pair[0], pair[1]
            )));
        }
    }

    let mut members: Vec<Vec<(f64, f64)>> = vec![Vec::new(); k];
    for obs in observations {
        members[bin_index(&edges, obs.range)].push((obs.range, obs.volume as f64));
    }

    let mut bins = Vec::with_capacity(k);
    for (j, mut obs) in members.into_iter().enumerate() {
        if obs.len() < MIN_BIN_OBS {
            return Err(Error::BinSparsity(format!(
                "bin {j} of k = {k} ([{}, {})) holds {} observations, need {MIN_BIN_OBS}",
                edges[j],
                edges[j + 1],
                obs.len()
            )));
        }
        obs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let volumes: Vec<f64> = obs.iter().map(|(_, v)| *v).collect();
        let volume_params = fit_mle(&volumes)
            .map_err(|e| Error::BinSparsity(format!("bin {j} of k = {k}: {e}")))?;
        let observed_mean_volume = volumes.iter().sum::<f64>() / volumes.len() as f64;
        bins.push(RangeBin {
            lower: edges[j],
            upper: edges[j + 1],
            volume_params,
            observations: obs,
            observed_mean_volume,
        });
    }

    let all_volumes: Vec<f64> = observations.iter().map(|o| o.volume as f64).collect();
    let range_prior = fit_mle(&ranges)?;
    let volume_prior = fit_mle(&all_volumes)?;
    let score = discrepancy(&bins);
    let dates: Vec<NaiveDate> = observations.iter().map(|o| o.timestamp.date_naive()).collect();

    Ok(BinnedModel {
        k,
        edges,
        bins,
        range_prior,
        volume_prior,
        discrepancy: score,
        span_start: *dates.iter().min().unwrap(),
        span_end: *dates.iter().max().unwrap(),
    })
}

/// Fit every bin count in `K_MIN..=K_MAX` and keep the model with minimal
/// discrepancy; ties break toward the smaller k.
pub fn select_model(observations: &[MergedObservation], policy: BinPolicy) -> Result<BinnedModel> {
    select_model_in(observations, policy, K_MIN, K_MAX)
}

/// As [`select_model`] over an explicit k range.
pub fn select_model_in(
    observations: &[MergedObservation],
    policy: BinPolicy,
    k_min: usize,
    k_max: usize,
) -> Result<BinnedModel> {
    let mut best: Option<BinnedModel> = None;
    let mut failures = Vec::new();
    for k in k_min..=k_max {
        match build_model(observations, k, policy) {
            Ok(model) => {
                let better = match &best {
                    Some(b) => model.discrepancy < b.discrepancy,
                    None => true,
                };
                if better {
                    best = Some(model);
                }
            }
            Err(e) => failures.push((k, e.to_string())),
        }
    }
    best.ok_or(Error::ModelSelection(failures))
}

/// On-disk model summary (the serialized form of a fitted model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub k: usize,
    pub edges: Vec<f64>,
    pub bins: Vec<BinSummary>,
    pub range_prior: LogNormalParams,
    pub volume_prior: LogNormalParams,
    pub discrepancy: f64,
    pub span_start: NaiveDate,
    pub span_end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub lower: f64,
    pub upper: f64,
    pub shape: f64,
    pub location: f64,
    pub scale: f64,
    pub n: usize,
    pub observed_mean_volume: f64,
}

impl From<&BinnedModel> for ModelFile {
    fn from(model: &BinnedModel) -> Self {
        ModelFile {
            k: model.k,
            edges: model.edges.clone(),
            bins: model
                .bins
                .iter()
                .map(|b| BinSummary {
                    lower: b.lower,
                    upper: b.upper,
                    shape: b.volume_params.shape,
                    location: b.volume_params.location,
                    scale: b.volume_params.scale,
                    n: b.observations.len(),
                    observed_mean_volume: b.observed_mean_volume,
                })
                .collect(),
            range_prior: model.range_prior,
            volume_prior: model.volume_prior,
            discrepancy: model.discrepancy,
            span_start: model.span_start,
            span_end: model.span_end,
        }
    }
}
