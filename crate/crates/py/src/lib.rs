//! Python bindings exposing the main volslice types and operations.

use std::path::PathBuf;

use chrono::NaiveDate;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use volslice::backtest::{predict_day, run_backtest, window_seed, PipelineConfig};
use volslice::binning::BinPolicy;
use volslice::error::Error;
use volslice::forecast;
use volslice::ingest::{read_minute_csv, write_minute_csv, MinuteBar, Session};
use volslice::mcmc::ChainConfig;
use volslice::stats;
use volslice::synth;

fn to_py_err(err: Error) -> PyErr {
    PyValueError::new_err(err.to_string())
}

/// Three-parameter log-normal distribution.
#[pyclass(name = "LogNormal", skip_from_py_object)]
#[derive(Clone)]
struct PyLogNormal {
    inner: stats::LogNormalParams,
}

#[pymethods]
impl PyLogNormal {
    #[new]
    #[pyo3(signature = (shape, location=0.0, scale=1.0))]
    fn new(shape: f64, location: f64, scale: f64) -> PyResult<Self> {
        Ok(PyLogNormal {
            inner: stats::LogNormalParams::new(shape, location, scale).map_err(to_py_err)?,
        })
    }

    /// MLE fit with location fixed at zero.
    #[staticmethod]
    fn fit(samples: Vec<f64>) -> PyResult<Self> {
        Ok(PyLogNormal { inner: stats::fit_mle(&samples).map_err(to_py_err)? })
    }

    #[getter]
    fn shape(&self) -> f64 {
        self.inner.shape
    }

    #[getter]
    fn location(&self) -> f64 {
        self.inner.location
    }

    #[getter]
    fn scale(&self) -> f64 {
        self.inner.scale
    }

    fn pdf(&self, x: f64) -> PyResult<f64> {
        stats::lognormal_pdf(x, &self.inner).map_err(to_py_err)
    }

    fn mean(&self) -> f64 {
        stats::lognormal_mean(&self.inner)
    }

    /// Seeded draws; identical seeds give identical sequences.
    fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| stats::sample(&self.inner, &mut rng)).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "LogNormal(shape={}, location={}, scale={})",
            self.inner.shape, self.inner.location, self.inner.scale
        )
    }
}

/// lambda = 1 - e^(-ln2 / h).
#[pyfunction]
fn lambda_from_half_life(h: f64) -> PyResult<f64> {
    forecast::lambda_from_half_life(h).map_err(to_py_err)
}

/// EWMA seeded with the first observation; returns the final value.
#[pyfunction]
fn ewma(series: Vec<f64>, lam: f64) -> PyResult<f64> {
    Ok(forecast::ewma(&series, lam).map_err(to_py_err)?.value)
}

/// Mean absolute percentage error as a percentage.
#[pyfunction]
fn mape(actuals: Vec<f64>, forecasts: Vec<f64>) -> PyResult<f64> {
    volslice::backtest::mape(&actuals, &forecasts).map_err(to_py_err)
}

fn pipeline_config(seed: u64, iterations: usize, burn_in: usize, half_life: f64) -> PipelineConfig {
    PipelineConfig {
        half_life,
        bin_policy: BinPolicy::EqualWidth,
        chain: ChainConfig { iterations, burn_in, seed },
        ..PipelineConfig::default()
    }
}

fn load_bars(path: &str) -> PyResult<Vec<MinuteBar>> {
    read_minute_csv(&PathBuf::from(path), Session::default()).map_err(to_py_err)
}

/// Rolling-window backtest over a minute CSV. Returns a dict with the
/// MAPEs and per-row predicted/actual series.
#[pyfunction]
#[pyo3(signature = (path, seed=0, iterations=20_000, burn_in=5_000, half_life=5.0))]
fn backtest_csv<'py>(
    py: Python<'py>,
    path: &str,
    seed: u64,
    iterations: usize,
    burn_in: usize,
    half_life: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let bars = load_bars(path)?;
    let cfg = pipeline_config(seed, iterations, burn_in, half_life);
    let report = run_backtest(&bars, &cfg).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("mape_volume", report.mape_volume)?;
    out.set_item("mape_range", report.mape_range)?;
    out.set_item("window", report.window)?;
    out.set_item(
        "dates",
        report.rows.iter().map(|r| r.target_date.to_string()).collect::<Vec<_>>(),
    )?;
    out.set_item(
        "predicted_volume",
        report.rows.iter().map(|r| r.predicted_volume).collect::<Vec<_>>(),
    )?;
    out.set_item(
        "actual_volume",
        report.rows.iter().map(|r| r.actual_avg_volume).collect::<Vec<_>>(),
    )?;
    out.set_item(
        "predicted_range",
        report.rows.iter().map(|r| r.predicted_range).collect::<Vec<_>>(),
    )?;
    out.set_item(
        "actual_range",
        report.rows.iter().map(|r| r.actual_ewma_range).collect::<Vec<_>>(),
    )?;
    Ok(out)
}

/// Predict one day from the five trading days preceding it in the CSV.
#[pyfunction]
#[pyo3(signature = (path, target_date, seed=0, iterations=20_000, burn_in=5_000, half_life=5.0))]
fn predict_csv<'py>(
    py: Python<'py>,
    path: &str,
    target_date: &str,
    seed: u64,
    iterations: usize,
    burn_in: usize,
    half_life: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let target: NaiveDate = target_date
        .parse()
        .map_err(|_| PyValueError::new_err(format!("invalid date {target_date:?}")))?;
    let bars = load_bars(path)?;
    let mut dates: Vec<NaiveDate> = Vec::new();
    for bar in &bars {
        let d = bar.timestamp.date_naive();
        if d < target && dates.last() != Some(&d) {
            dates.push(d);
        }
    }
    if dates.len() < 5 {
        return Err(PyValueError::new_err(format!(
            "need 5 trading days before {target}, found {}",
            dates.len()
        )));
    }
    let keep = &dates[dates.len() - 5..];
    let window: Vec<MinuteBar> = bars
        .into_iter()
        .filter(|b| keep.contains(&b.timestamp.date_naive()))
        .collect();
    let mut cfg = pipeline_config(seed, iterations, burn_in, half_life);
    cfg.chain.seed = window_seed(seed, target);
    let pred = predict_day(&window, target, &cfg).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("target_date", pred.target_date.to_string())?;
    out.set_item("expected_range_5min", pred.expected_range_5min)?;
    out.set_item("mapped_daily_range", pred.mapped_daily_range)?;
    out.set_item("predicted_volume", pred.predicted_volume)?;
    out.set_item("chosen_k", pred.chosen_k)?;
    out.set_item("ewma_daily", pred.ewma_daily)?;
    out.set_item("asf", pred.asf)?;
    Ok(out)
}

/// Write a seeded synthetic month of minute bars as an input CSV.
/// `kind` is "constant" (near-constant volatility) or "tsla" (dispersed).
#[pyfunction]
#[pyo3(signature = (path, days=21, seed=0, kind="tsla"))]
fn write_synthetic_month(path: &str, days: usize, seed: u64, kind: &str) -> PyResult<usize> {
    let spec = match kind {
        "constant" => synth::constant_vol_spec(),
        "tsla" => synth::tsla_like_spec(),
        other => return Err(PyValueError::new_err(format!("unknown kind {other:?}"))),
    };
    let bars = synth::generate_month(&spec, days, seed);
    let mut buf = Vec::new();
    write_minute_csv(&mut buf, &bars).map_err(to_py_err)?;
    std::fs::write(path, buf).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(bars.len())
}

#[pymodule]
fn volslice_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLogNormal>()?;
    m.add_function(wrap_pyfunction!(lambda_from_half_life, m)?)?;
    m.add_function(wrap_pyfunction!(ewma, m)?)?;
    m.add_function(wrap_pyfunction!(mape, m)?)?;
    m.add_function(wrap_pyfunction!(backtest_csv, m)?)?;
    m.add_function(wrap_pyfunction!(predict_csv, m)?)?;
    m.add_function(wrap_pyfunction!(write_synthetic_month, m)?)?;
    Ok(())
}
