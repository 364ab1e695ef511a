//! Volatility-volume order slicing pipeline.
//!
//! Ingests minute-level OHLCV data, aggregates to 5-minute and daily bars,
//! fits binned log-normal volume models over price ranges, estimates the
//! next day's expected range and tradable volume with Metropolis-Hastings
//! independence samplers guided by an EWMA forecast, evaluates the whole
//! thing with a rolling-window backtest, and turns predictions into
//! child-order schedules.

pub mod backtest;
pub mod binning;
pub mod error;
pub mod forecast;
pub mod ingest;
pub mod mcmc;
pub mod seeds;
pub mod slicer;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
