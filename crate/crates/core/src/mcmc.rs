//! Metropolis-Hastings independence samplers for range given volume and
//! volume given a fixed expected range.
//!
//! Both samplers propose from the stationary prior. The range sampler's
//! acceptance ratio is the likelihood ratio, so its stationary law is
//! proportional to prior(R) * L(v|R). The volume sampler's acceptance
//! ratio is the prior-density ratio itself, which makes its stationary
//! law proportional to the *square* of the prior density; this is kept
//! as stated rather than corrected to a plain prior draw.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binning::{bin_of, build_model, BinPolicy, BinnedModel, K_MAX, K_MIN};
use crate::error::{Error, Result};
use crate::ingest::MergedObservation;
use crate::seeds::mix_seed;
use crate::stats::{fit_mle, lognormal_pdf, sample, LogNormalParams};

/// Chain length, burn-in, and seed for one sampler run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig { iterations: 20_000, burn_in: 5_000, seed: 0 }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Parameter("iterations must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Parameter(format!(
                "burn-in {} must be below iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.iterations - self.burn_in < 1000 {
            return Err(Error::Parameter(format!(
                "iterations - burn_in = {} leaves fewer than 1000 samples",
                self.iterations - self.burn_in
            )));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        ChainConfig { seed, ..self }
    }
}

/// Completed sampler run: post-burn-in states plus the full trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub samples: Vec<f64>,
    pub acceptance_rate: f64,
    pub expected_value: f64,
    /// Every iteration's retained state and whether the proposal was
    /// accepted, including burn-in. Used for convergence dumps.
    pub trace: Vec<(f64, bool)>,
}

impl Chain {
    /// Write the full trace as `iteration,state,accepted` CSV.
    pub fn write_trace_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let io_err = |source| Error::Io { path: "<chain trace>".into(), source };
        writeln!(w, "iteration,state,accepted").map_err(io_err)?;
        for (i, (state, accepted)) in self.trace.iter().enumerate() {
            writeln!(w, "{i},{state},{}", u8::from(*accepted)).map_err(io_err)?;
        }
        Ok(())
    }
}

fn run_independence_chain<F>(
    prior: &LogNormalParams,
    cfg: &ChainConfig,
    mut weight: F,
) -> Result<Chain>
where
    F: FnMut(f64) -> Result<f64>,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = sample(prior, &mut rng);
    let mut state_weight = weight(state)?;
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut accepted_count = 0usize;
    for _ in 0..cfg.iterations {
        let proposal = sample(prior, &mut rng);
        let proposal_weight = weight(proposal)?;
        if proposal_weight == 0.0 && state_weight == 0.0 {
            return Err(Error::DegenerateLikelihood(format!(
                "zero likelihood for both current state {state} and proposal {proposal}"
            )));
        }
        let accepted = if proposal_weight >= state_weight {
            true
        } else {
            rng.random::<f64>() < proposal_weight / state_weight
        };
        if accepted {
            state = proposal;
            state_weight = proposal_weight;
            accepted_count += 1;
        }
        trace.push((state, accepted));
    }
    let samples: Vec<f64> = trace[cfg.burn_in..].iter().map(|(s, _)| *s).collect();
    let expected_value = samples.iter().sum::<f64>() / samples.len() as f64;
    Ok(Chain {
        samples,
        acceptance_rate: accepted_count as f64 / cfg.iterations as f64,
        expected_value,
        trace,
    })
}

/// Likelihood of a range state: the density of the volume paired with the
/// closest observed range inside the state's bin, under that bin's fitted
/// volume distribution.
pub fn range_state_likelihood(model: &BinnedModel, r: f64) -> Result<f64> {
    let bin = bin_of(model, r);
    let observed_volume = bin.closest_volume(r);
    lognormal_pdf(observed_volume, &bin.volume_params)
}

/// Sample the range posterior P(Range | Volume) for one fitted model.
///
/// Proposals come from the model's global range prior; `conditioning_volume`
/// is the fixed volume context the posterior is conditioned on (it is
/// realized per state through the closest-observed-volume lookup).
pub fn mh_range_chain(
    model: &BinnedModel,
    conditioning_volume: f64,
    cfg: &ChainConfig,
) -> Result<Chain> {
    if conditioning_volume <= 0.0 || conditioning_volume.is_nan() {
        return Err(Error::Parameter(format!(
            "conditioning volume must be positive, got {conditioning_volume}"
        )));
    }
    run_independence_chain(&model.range_prior, cfg, |r| range_state_likelihood(model, r))
}

/// Per-k outcome of the range sampler sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KResult {
    pub expected_range: f64,
    pub acceptance_rate: f64,
    pub discrepancy: f64,
}

/// Range-sampler sweep over bin counts: expected ranges per valid k plus
/// warnings for the k values whose models could not be built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeSweep {
    pub results: BTreeMap<usize, KResult>,
    pub skipped: Vec<(usize, String)>,
}

impl RangeSweep {
    pub fn expected_ranges(&self) -> BTreeMap<usize, f64> {
        self.results.iter().map(|(k, r)| (*k, r.expected_range)).collect()
    }
}

/// Build a model and run the range sampler for each k in the default
/// 5..=10 sweep; each k's chain gets a seed derived from `cfg.seed`.
pub fn expected_range_per_k(
    observations: &[MergedObservation],
    conditioning_volume: f64,
    cfg: &ChainConfig,
    policy: BinPolicy,
) -> Result<RangeSweep> {
    expected_range_per_k_in(observations, conditioning_volume, cfg, policy, K_MIN, K_MAX)
}

pub fn expected_range_per_k_in(
    observations: &[MergedObservation],
    conditioning_volume: f64,
    cfg: &ChainConfig,
    policy: BinPolicy,
    k_min: usize,
    k_max: usize,
) -> Result<RangeSweep> {
    let mut results = BTreeMap::new();
    let mut skipped = Vec::new();
    for k in k_min..=k_max {
        let model = match build_model(observations, k, policy) {
            Ok(m) => m,
            Err(e) => {
                skipped.push((k, e.to_string()));
                continue;
            }
        };
        let chain_cfg = cfg.with_seed(mix_seed(cfg.seed, k as u64));
        let chain = mh_range_chain(&model, conditioning_volume, &chain_cfg)?;
        results.insert(
            k,
            KResult {
                expected_range: chain.expected_value,
                acceptance_rate: chain.acceptance_rate,
                discrepancy: model.discrepancy,
            },
        );
    }
    if results.is_empty() {
        return Err(Error::ModelSelection(skipped));
    }
    Ok(RangeSweep { results, skipped })
}

/// Sample volumes with the expected range held fixed. Under the stated
/// independence P(R|V) = P(R) the acceptance ratio reduces to the prior
/// density ratio, so the chain's stationary density is proportional to
/// the squared prior density.
pub fn mh_volume_chain(
    volume_prior: &LogNormalParams,
    expected_range: f64,
    cfg: &ChainConfig,
) -> Result<Chain> {
    if expected_range <= 0.0 || expected_range.is_nan() {
        return Err(Error::Parameter(format!(
            "expected range must be positive, got {expected_range}"
        )));
    }
    run_independence_chain(volume_prior, cfg, |v| lognormal_pdf(v, volume_prior))
}

/// Fit a log-normal to a chain's post-burn-in samples.
pub fn fit_sampled_volumes(chain: &Chain) -> Result<LogNormalParams> {
    if chain.samples.len() < 1000 {
        return Err(Error::InsufficientData(format!(
            "need at least 1000 chain samples, got {}",
            chain.samples.len()
        )));
    }
    fit_mle(&chain.samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::lognormal_mean;
    use chrono::DateTime;

    fn cfg(seed: u64) -> ChainConfig {
        ChainConfig { iterations: 5_000, burn_in: 1_000, seed }
    }

    fn synthetic_observations(n: u32, seed: u64) -> Vec<MergedObservation> {
        let vol = LogNormalParams::new(0.5, 0.0, 1e5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let ts = DateTime::parse_from_rfc3339("2024-10-22T09:30:00+00:00").unwrap()
                    + chrono::Duration::minutes(i as i64);
                MergedObservation {
                    timestamp: ts,
                    volume: sample(&vol, &mut rng) as u64,
                    range: 0.5 + 9.5 * (i as f64 / n as f64),
                }
            })
            .collect()
    }

    #[test]
    fn config_validation() {
        assert!(ChainConfig::default().validate().is_ok());
        assert!(ChainConfig { iterations: 0, burn_in: 0, seed: 0 }.validate().is_err());
        assert!(ChainConfig { iterations: 100, burn_in: 200, seed: 0 }.validate().is_err());
        assert!(ChainConfig { iterations: 1500, burn_in: 600, seed: 0 }.validate().is_err());
    }

    #[test]
    fn range_chain_is_seed_deterministic() {
        let obs = synthetic_observations(600, 1);
        let model = build_model(&obs, 5, BinPolicy::EqualWidth).unwrap();
        let a = mh_range_chain(&model, 1e5, &cfg(42)).unwrap();
        let b = mh_range_chain(&model, 1e5, &cfg(42)).unwrap();
        assert_eq!(a, b);
        let c = mh_range_chain(&model, 1e5, &cfg(43)).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn range_chain_basic_diagnostics() {
        let obs = synthetic_observations(600, 2);
        let model = build_model(&obs, 6, BinPolicy::EqualWidth).unwrap();
        let chain = mh_range_chain(&model, 1e5, &cfg(7)).unwrap();
        assert_eq!(chain.samples.len(), 4_000);
        assert_eq!(chain.trace.len(), 5_000);
        assert!(chain.acceptance_rate > 0.0 && chain.acceptance_rate < 1.0);
        let mean = chain.samples.iter().sum::<f64>() / chain.samples.len() as f64;
        assert_eq!(chain.expected_value, mean);
    }

    #[test]
    fn higher_weight_proposal_always_accepted() {
        // Weight function that strictly increases each call makes every
        // proposal beat the current state.
        let prior = LogNormalParams::new(0.3, 0.0, 1.0).unwrap();
        let mut w = 0.0;
        let chain = run_independence_chain(&prior, &cfg(3), |_| {
            w += 1.0;
            Ok(w)
        })
        .unwrap();
        assert_eq!(chain.acceptance_rate, 1.0);
    }

    #[test]
    fn rejected_iterations_repeat_previous_state() {
        let obs = synthetic_observations(600, 4);
        let model = build_model(&obs, 5, BinPolicy::EqualWidth).unwrap();
        let chain = mh_range_chain(&model, 1e5, &cfg(11)).unwrap();
        let mut saw_rejection = false;
        for pair in chain.trace.windows(2) {
            if !pair[1].1 {
                saw_rejection = true;
                assert_eq!(pair[0].0, pair[1].0);
            }
        }
        assert!(saw_rejection);
    }

    #[test]
    fn both_zero_likelihood_errors() {
        let prior = LogNormalParams::new(0.3, 0.0, 1.0).unwrap();
        let err = run_independence_chain(&prior, &cfg(5), |_| Ok(0.0)).unwrap_err();
        assert!(matches!(err, Error::DegenerateLikelihood(_)));
    }

    #[test]
    fn nonpositive_conditioning_volume_rejected() {
        let obs = synthetic_observations(600, 5);
        let model = build_model(&obs, 5, BinPolicy::EqualWidth).unwrap();
        assert!(mh_range_chain(&model, 0.0, &cfg(1)).is_err());
    }

    #[test]
    fn sweep_covers_valid_k_and_is_reproducible() {
        let obs = synthetic_observations(900, 6);
        let c = cfg(99);
        let sweep = expected_range_per_k(&obs, 1e5, &c, BinPolicy::EqualWidth).unwrap();
        assert!(!sweep.results.is_empty());
        assert!(sweep.results.len() + sweep.skipped.len() == 6);
        let again = expected_range_per_k(&obs, 1e5, &c, BinPolicy::EqualWidth).unwrap();
        assert_eq!(sweep, again);
    }

    #[test]
    fn sweep_with_identical_bins_agrees_across_k() {
        // Volumes independent of range: every bin fits the same law, so
        // expected ranges across k agree within Monte-Carlo noise.
        let obs = synthetic_observations(6000, 7);
        let big = ChainConfig { iterations: 30_000, burn_in: 5_000, seed: 5 };
        let sweep = expected_range_per_k(&obs, 1e5, &big, BinPolicy::EqualWidth).unwrap();
        let values: Vec<f64> = sweep.results.values().map(|r| r.expected_range).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        for v in &values {
            assert!((v - mean).abs() / mean < 0.05, "expected ranges diverge: {values:?}");
        }
    }

    #[test]
    fn volume_chain_deterministic_and_positive() {
        let prior = LogNormalParams::new(0.5, 0.0, 1e5).unwrap();
        let a = mh_volume_chain(&prior, 2.5, &cfg(21)).unwrap();
        let b = mh_volume_chain(&prior, 2.5, &cfg(21)).unwrap();
        assert_eq!(a, b);
        assert!(a.samples.iter().all(|v| *v > 0.0));
        assert!(a.acceptance_rate > 0.0 && a.acceptance_rate < 1.0);
        assert!(mh_volume_chain(&prior, -1.0, &cfg(21)).is_err());
    }

    #[test]
    fn fit_sampled_volumes_moment_consistency() {
        let prior = LogNormalParams::new(0.4, 0.0, 1e5).unwrap();
        let chain = mh_volume_chain(&prior, 1.0, &ChainConfig::default()).unwrap();
        let fit = fit_sampled_volumes(&chain).unwrap();
        let n = chain.samples.len() as f64;
        let mean = chain.expected_value;
        let var = chain.samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        // MH samples are autocorrelated; allow a generous multiple of the
        // i.i.d. standard error.
        let se = (var / n).sqrt();
        assert!((lognormal_mean(&fit) - mean).abs() < 10.0 * se);
    }

    #[test]
    fn fit_sampled_volumes_rejects_short_or_constant_chains() {
        let short = Chain {
            samples: vec![1.0; 10],
            acceptance_rate: 0.5,
            expected_value: 1.0,
            trace: vec![],
        };
        assert!(matches!(fit_sampled_volumes(&short), Err(Error::InsufficientData(_))));
        let constant = Chain {
            samples: vec![5.0; 2000],
            acceptance_rate: 0.5,
            expected_value: 5.0,
            trace: vec![],
        };
        assert!(matches!(fit_sampled_volumes(&constant), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn trace_csv_shape() {
        let prior = LogNormalParams::new(0.4, 0.0, 10.0).unwrap();
        let chain = mh_volume_chain(&prior, 1.0, &cfg(1)).unwrap();
        let mut buf = Vec::new();
        chain.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,state,accepted\n"));
        assert_eq!(text.lines().count(), 1 + chain.trace.len());
    }
}
