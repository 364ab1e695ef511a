//! Three-parameter log-normal distribution: density, MLE, moments, sampling.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT_2PI: f64 = 2.5066282746310002;
const MIN_SHAPE: f64 = 1e-8;

/// Log-normal parameter triple: `shape` is the std-dev of the underlying
/// normal, `location` shifts the support, `scale` = exp(mean of the
/// underlying normal).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalParams {
    pub shape: f64,
    pub location: f64,
    pub scale: f64,
}

impl LogNormalParams {
    pub fn new(shape: f64, location: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(Error::Parameter(format!("shape must be > 0, got {shape}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Parameter(format!("scale must be > 0, got {scale}")));
        }
        if !location.is_finite() {
            return Err(Error::Parameter(format!("location must be finite, got {location}")));
        }
        Ok(LogNormalParams { shape, location, scale })
    }
}

/// How MLE pins the location parameter before solving shape/scale in
/// closed form. Full 3-parameter MLE is ill-posed (likelihood unbounded
/// as location approaches the minimum sample), so location is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocationPolicy {
    /// location = 0 (2-parameter fit). The default.
    Zero,
    /// location = max(0, min(samples) - 1e-6 * min(samples)).
    ShiftToMin,
}

/// Density of the shifted log-normal. Zero for x <= location.
pub fn lognormal_pdf(x: f64, params: &LogNormalParams) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("pdf argument must be finite, got {x}")));
    }
    let shifted = x - params.location;
    if shifted <= 0.0 {
        return Ok(0.0);
    }
    let z = (shifted / params.scale).ln() / params.shape;
    Ok((-0.5 * z * z).exp() / (shifted * params.shape * SQRT_2PI))
}

/// Fit shape and scale by MLE with location fixed at zero.
pub fn fit_mle(samples: &[f64]) -> Result<LogNormalParams> {
    fit_mle_with(samples, LocationPolicy::Zero)
}

/// Fit shape and scale by MLE under the given location policy.
pub fn fit_mle_with(samples: &[f64], policy: LocationPolicy) -> Result<LogNormalParams> {
    if samples.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "MLE needs at least 3 samples, got {}",
            samples.len()
        )));
    }
    let min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let location = match policy {
        LocationPolicy::Zero => 0.0,
        LocationPolicy::ShiftToMin => (min - 1e-6 * min).max(0.0),
    };
    let mut logs = Vec::with_capacity(samples.len());
    for &x in samples {
        let shifted = x - location;
        if shifted <= 0.0 || !x.is_finite() {
            return Err(Error::Domain(format!(
                "sample {x} is not above location {location}"
            )));
        }
        logs.push(shifted.ln());
    }
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
    let shape = var.sqrt();
    if shape < MIN_SHAPE {
        return Err(Error::DegenerateFit(format!(
            "log-sample spread {shape:e} below minimum shape {MIN_SHAPE:e}"
        )));
    }
    LogNormalParams::new(shape, location, mean.exp())
}

/// Expected value: location + scale * exp(shape^2 / 2).
pub fn lognormal_mean(params: &LogNormalParams) -> f64 {
    params.location + params.scale * (params.shape * params.shape / 2.0).exp()
}

/// One draw: location + scale * exp(shape * z), z standard normal.
pub fn sample<R: Rng + ?Sized>(params: &LogNormalParams, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    params.location + params.scale * (params.shape * z).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(shape: f64, location: f64, scale: f64) -> LogNormalParams {
        LogNormalParams::new(shape, location, scale).unwrap()
    }

    #[test]
    fn pdf_at_scale_point() {
        let p = params(0.7, 3.0, 2.0);
        let at_scale = lognormal_pdf(p.location + p.scale, &p).unwrap();
        assert_relative_eq!(at_scale, 1.0 / (p.scale * p.shape * SQRT_2PI), epsilon = 1e-12);
    }

    #[test]
    fn pdf_zero_at_and_below_location() {
        let p = params(0.5, 10.0, 2.0);
        assert_eq!(lognormal_pdf(10.0, &p).unwrap(), 0.0);
        assert_eq!(lognormal_pdf(-5.0, &p).unwrap(), 0.0);
    }

    #[test]
    fn pdf_standard_value() {
        let p = params(1.0, 0.0, 1.0);
        assert_relative_eq!(lognormal_pdf(1.0, &p).unwrap(), 0.3989422804014327, epsilon = 1e-9);
    }

    #[test]
    fn pdf_rejects_non_finite() {
        let p = params(1.0, 0.0, 1.0);
        assert!(lognormal_pdf(f64::NAN, &p).is_err());
        assert!(lognormal_pdf(f64::INFINITY, &p).is_err());
    }

    #[test]
    fn pdf_integrates_to_one() {
        let p = params(0.8, 5.0, 3.0);
        // Trapezoid over (location, location + 50*scale*e^(3*shape)).
        let hi = p.location + 50.0 * p.scale * (3.0 * p.shape).exp();
        let n = 400_000;
        let h = (hi - p.location) / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            let x = p.location + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            total += w * lognormal_pdf(x, &p).unwrap();
        }
        total *= h;
        assert!((total - 1.0).abs() < 1e-4, "integral = {total}");
    }

    #[test]
    fn fit_hand_example() {
        let e = std::f64::consts::E;
        let samples = [e, e, e.powi(3), e.powi(3)];
        let fit = fit_mle(&samples).unwrap();
        assert_relative_eq!(fit.scale, e * e, epsilon = 1e-9);
        assert_relative_eq!(fit.shape, 1.0, epsilon = 1e-9);
        assert_eq!(fit.location, 0.0);
    }

    #[test]
    fn fit_rejects_constant_samples() {
        let err = fit_mle(&[5.0, 5.0, 5.0, 5.0]).unwrap_err();
        assert!(matches!(err, Error::DegenerateFit(_)));
    }

    #[test]
    fn fit_rejects_short_input() {
        assert!(matches!(fit_mle(&[1.0, 2.0]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn fit_rejects_sample_at_or_below_location() {
        assert!(matches!(fit_mle(&[0.0, 1.0, 2.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn fit_recovers_synthetic_parameters() {
        let truth = params(0.5, 0.0, 100_000.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples: Vec<f64> = (0..10_000).map(|_| sample(&truth, &mut rng)).collect();
        let fit = fit_mle(&samples).unwrap();
        assert!((fit.shape - truth.shape).abs() < 0.02, "shape {}", fit.shape);
        assert!((fit.scale / truth.scale - 1.0).abs() < 0.02, "scale {}", fit.scale);
    }

    #[test]
    fn mean_closed_forms() {
        assert_relative_eq!(lognormal_mean(&params(1.0, 0.0, 1.0)), (0.5f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(
            lognormal_mean(&params(0.5, 10.0, 4.0)),
            10.0 + 4.0 * (0.125f64).exp(),
            epsilon = 1e-12
        );
        // Vanishing variance: mean -> location + scale.
        assert_relative_eq!(lognormal_mean(&params(1e-9, 2.0, 3.0)), 5.0, epsilon = 1e-6);
    }

    #[test]
    fn empirical_mean_matches_closed_form() {
        let p = params(0.5, 0.0, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let total: f64 = (0..n).map(|_| sample(&p, &mut rng)).sum();
        let empirical = total / n as f64;
        assert!((empirical / lognormal_mean(&p) - 1.0).abs() < 0.01);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let p = params(0.5, 1.0, 2.0);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..10).map(|_| sample(&p, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(99), draw(99));
    }

    #[test]
    fn shift_to_min_policy_keeps_samples_in_support() {
        let samples = [10.0, 12.0, 15.0, 30.0];
        let fit = fit_mle_with(&samples, LocationPolicy::ShiftToMin).unwrap();
        assert!(fit.location > 0.0 && fit.location < 10.0);
    }
}
