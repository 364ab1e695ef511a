//! `volslice` CLI: aggregate minute data, fit binned models, predict the
//! next day's range and volume, run rolling backtests, and emit order
//! schedules.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{NaiveDate, NaiveTime};
use clap::{Args, Parser, Subcommand};

use volslice::backtest::{predict_day, run_backtest, window_seed, PipelineConfig};
use volslice::binning::{select_model_in, BinPolicy, ModelFile};
use volslice::error::Error;
use volslice::forecast::ForecastRecord;
use volslice::ingest::{
    aggregate_5min, aggregate_daily, merge_volume_range, read_minute_csv, write_daily_csv,
    write_interval_csv, MinuteBar, Session,
};
use volslice::mcmc::ChainConfig;
use volslice::slicer::build_schedule;

#[derive(Parser)]
#[command(name = "volslice", version, about = "Volatility-volume order slicing pipeline")]
struct Cli {
    /// Optional key=value config file; command-line flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default, Clone)]
struct CommonOpts {
    /// Minute-level OHLCV CSV (Datetime,Open,High,Low,Close,Adj Close,Volume).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Master seed for all samplers.
    #[arg(long)]
    seed: Option<u64>,
    /// EWMA half-life in trading days.
    #[arg(long)]
    half_life: Option<f64>,
    /// Smallest bin count to try.
    #[arg(long)]
    bins_min: Option<usize>,
    /// Largest bin count to try.
    #[arg(long)]
    bins_max: Option<usize>,
    /// MH iterations per chain.
    #[arg(long)]
    iterations: Option<usize>,
    /// MH burn-in iterations.
    #[arg(long)]
    burn_in: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Bin edge policy: equal-width or quantile.
    #[arg(long)]
    bin_policy: Option<String>,
    /// Session open, HH:MM exchange time.
    #[arg(long)]
    session_open: Option<String>,
    /// Session close (inclusive), HH:MM exchange time.
    #[arg(long)]
    session_close: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Aggregate minute bars to 5-minute and daily CSVs.
    Aggregate {
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Fit the binned volume model and write it with a per-k table.
    Fit {
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Predict range and volume for a target day and emit a schedule.
    Predict {
        #[command(flatten)]
        opts: CommonOpts,
        /// Day to predict (YYYY-MM-DD); the five prior trading days in
        /// the input form the window.
        #[arg(long)]
        target_date: NaiveDate,
        /// Parent order size in shares.
        #[arg(long, default_value_t = 10_000)]
        parent_quantity: u64,
        /// Max fraction of predicted interval volume per slice.
        #[arg(long, default_value_t = 0.1)]
        participation_cap: f64,
        /// Also dump each sampler chain as CSV.
        #[arg(long)]
        dump_chains: bool,
    },
    /// Rolling-window evaluation over the whole input.
    Backtest {
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Build a schedule from an existing prediction JSON.
    Slice {
        #[command(flatten)]
        opts: CommonOpts,
        /// Prediction JSON produced by `predict`.
        #[arg(long)]
        prediction: PathBuf,
        #[arg(long)]
        parent_quantity: u64,
        #[arg(long, default_value_t = 0.1)]
        participation_cap: f64,
        /// Reference price for the limit bands.
        #[arg(long)]
        previous_close: f64,
    },
}

/// Effective run configuration after merging config file and flags.
struct RunConfig {
    input: PathBuf,
    out_dir: PathBuf,
    session: Session,
    pipeline: PipelineConfig,
}

fn parse_time(s: &str) -> Result<NaiveTime, Error> {
    NaiveTime::parse_from_str(s, "%H:%M")
        .or_else(|_| NaiveTime::parse_from_str(s, "%H:%M:%S"))
        .map_err(|_| Error::Parameter(format!("invalid time {s:?}, expected HH:MM")))
}

fn parse_policy(s: &str) -> Result<BinPolicy, Error> {
    match s {
        "equal-width" => Ok(BinPolicy::EqualWidth),
        "quantile" => Ok(BinPolicy::Quantile),
        other => Err(Error::Parameter(format!(
            "unknown bin policy {other:?}, expected equal-width or quantile"
        ))),
    }
}

fn load_config_file(path: &Path) -> Result<BTreeMap<String, String>, Error> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: format!("expected key = value, got {line:?}"),
        })?;
        map.insert(key.trim().replace('-', "_"), value.trim().to_string());
    }
    Ok(map)
}

fn resolve(config_path: Option<&Path>, opts: &CommonOpts) -> Result<RunConfig, Error> {
    let file = match config_path {
        Some(p) => load_config_file(p)?,
        None => BTreeMap::new(),
    };
    let from_file = |key: &str| file.get(key).cloned();
    let parse_num = |key: &str, value: &str| {
        value.parse::<f64>().map_err(|_| Error::Parameter(format!("invalid {key}: {value:?}")))
    };

    let input = opts
        .input
        .clone()
        .or_else(|| from_file("input").map(PathBuf::from))
        .ok_or_else(|| Error::Parameter("no input file given (--input)".into()))?;
    let out_dir = opts
        .out_dir
        .clone()
        .or_else(|| from_file("out_dir").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    let mut pipeline = PipelineConfig::default();
    if let Some(h) = opts.half_life.map(Ok).or_else(|| {
        from_file("half_life").map(|v| parse_num("half_life", &v))
    }) {
        pipeline.half_life = h?;
    }
    if let Some(v) = opts.bins_min.map(Ok).or_else(|| {
        from_file("bins_min").map(|v| parse_num("bins_min", &v).map(|n| n as usize))
    }) {
        pipeline.k_min = v?;
    }
    if let Some(v) = opts.bins_max.map(Ok).or_else(|| {
        from_file("bins_max").map(|v| parse_num("bins_max", &v).map(|n| n as usize))
    }) {
        pipeline.k_max = v?;
    }
    let mut chain = ChainConfig::default();
    if let Some(v) = opts.iterations.map(Ok).or_else(|| {
        from_file("iterations").map(|v| parse_num("iterations", &v).map(|n| n as usize))
    }) {
        chain.iterations = v?;
    }
    if let Some(v) = opts.burn_in.map(Ok).or_else(|| {
        from_file("burn_in").map(|v| parse_num("burn_in", &v).map(|n| n as usize))
    }) {
        chain.burn_in = v?;
    }
    if let Some(v) = opts.seed.map(Ok).or_else(|| {
        from_file("seed").map(|v| parse_num("seed", &v).map(|n| n as u64))
    }) {
        chain.seed = v?;
    }
    chain.validate()?;
    pipeline.chain = chain;
    if let Some(p) = opts.bin_policy.clone().or_else(|| from_file("bin_policy")) {
        pipeline.bin_policy = parse_policy(&p)?;
    }

    let mut session = Session::default();
    if let Some(t) = opts.session_open.clone().or_else(|| from_file("session_open")) {
        session.open = parse_time(&t)?;
    }
    if let Some(t) = opts.session_close.clone().or_else(|| from_file("session_close")) {
        session.close = parse_time(&t)?;
    }

    Ok(RunConfig { input, out_dir, session, pipeline })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| Error::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
    }
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value).expect("serialization cannot fail");
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn cmd_aggregate(cfg: &RunConfig) -> Result<(), Error> {
    let bars = read_minute_csv(&cfg.input, cfg.session)?;
    let intervals = aggregate_5min(&bars)?;
    let daily = aggregate_daily(&bars)?;
    let mut buf = Vec::new();
    write_interval_csv(&mut buf, &intervals)?;
    write_file(&cfg.out_dir.join("five_minute.csv"), &buf)?;
    buf.clear();
    write_daily_csv(&mut buf, &daily)?;
    write_file(&cfg.out_dir.join("daily.csv"), &buf)?;
    println!(
        "aggregated {} minute bars into {} five-minute bars across {} days",
        bars.len(),
        intervals.len(),
        daily.len()
    );
    Ok(())
}

fn cmd_fit(cfg: &RunConfig) -> Result<(), Error> {
    let bars = read_minute_csv(&cfg.input, cfg.session)?;
    let intervals = aggregate_5min(&bars)?;
    let merged = merge_volume_range(&bars, &intervals)?;
    let pl = &cfg.pipeline;

    let mut table = String::from("k,discrepancy,error\n");
    for k in pl.k_min..=pl.k_max {
        match volslice::binning::build_model(&merged, k, pl.bin_policy) {
            Ok(m) => table.push_str(&format!("{k},{},\n", m.discrepancy)),
            Err(e) => table.push_str(&format!("{k},,{}\n", e.to_string().replace(',', ";"))),
        }
    }
    write_file(&cfg.out_dir.join("discrepancy_per_k.csv"), table.as_bytes())?;

    let model = select_model_in(&merged, pl.bin_policy, pl.k_min, pl.k_max)?;
    write_json(&cfg.out_dir.join("model.json"), &ModelFile::from(&model))?;
    println!("selected k = {} with discrepancy {}", model.k, model.discrepancy);
    Ok(())
}

/// The five trading days in `bars` immediately preceding `target`.
fn window_before(bars: &[MinuteBar], target: NaiveDate) -> Result<Vec<MinuteBar>, Error> {
    let mut dates: Vec<NaiveDate> = Vec::new();
    for bar in bars {
        let d = bar.timestamp.date_naive();
        if d < target && dates.last() != Some(&d) {
            dates.push(d);
        }
    }
    if dates.len() < 5 {
        return Err(Error::InsufficientHistory(format!(
            "need 5 trading days before {target}, found {}",
            dates.len()
        )));
    }
    let keep: Vec<NaiveDate> = dates[dates.len() - 5..].to_vec();
    Ok(bars
        .iter()
        .filter(|b| keep.contains(&b.timestamp.date_naive()))
        .cloned()
        .collect())
}

fn cmd_predict(
    cfg: &RunConfig,
    target_date: NaiveDate,
    parent_quantity: u64,
    participation_cap: f64,
    dump_chains: bool,
) -> Result<(), Error> {
    let bars = read_minute_csv(&cfg.input, cfg.session)?;
    let window = window_before(&bars, target_date)?;
    let mut pl = cfg.pipeline.clone();
    pl.chain.seed = window_seed(cfg.pipeline.chain.seed, target_date);
    let prediction = predict_day(&window, target_date, &pl)?;

    write_json(&cfg.out_dir.join("prediction.json"), &prediction)?;
    let forecast = ForecastRecord {
        date: target_date,
        ewma_daily: prediction.ewma_daily,
        lambda: prediction.lambda,
        half_life: cfg.pipeline.half_life,
        asf: prediction.asf,
        mapped_target: prediction.ewma_daily / prediction.asf,
        chosen_k: prediction.chosen_k,
        expected_range: prediction.expected_range_5min,
    };
    write_json(&cfg.out_dir.join("forecast.json"), &forecast)?;

    let previous_close = window.last().expect("window is non-empty").close;
    let schedule = build_schedule(
        &prediction,
        parent_quantity,
        participation_cap,
        &cfg.session,
        previous_close,
    )?;
    let mut buf = Vec::new();
    schedule.write_csv(&mut buf)?;
    write_file(&cfg.out_dir.join("schedule.csv"), &buf)?;

    if dump_chains {
        let merged = {
            let intervals = aggregate_5min(&window)?;
            merge_volume_range(&window, &intervals)?
        };
        let sweep_cfg = &pl.chain;
        for &k in prediction.diagnostics.range_sweep.results.keys() {
            let model = volslice::binning::build_model(&merged, k, pl.bin_policy)?;
            let chain_cfg = sweep_cfg.with_seed(volslice::seeds::mix_seed(sweep_cfg.seed, k as u64));
            let chain = volslice::mcmc::mh_range_chain(
                &model,
                prediction.diagnostics.conditioning_volume,
                &chain_cfg,
            )?;
            let mut buf = Vec::new();
            chain.write_trace_csv(&mut buf)?;
            write_file(&cfg.out_dir.join(format!("chain_range_k{k}.csv")), &buf)?;
        }
    }

    println!(
        "predicted {target_date}: 5-min range {}, daily range {}, volume {}",
        prediction.expected_range_5min, prediction.mapped_daily_range, prediction.predicted_volume
    );
    Ok(())
}

fn cmd_backtest(cfg: &RunConfig) -> Result<(), Error> {
    let bars = read_minute_csv(&cfg.input, cfg.session)?;
    let report = run_backtest(&bars, &cfg.pipeline)?;
    write_json(&cfg.out_dir.join("report.json"), &report)?;
    let mut buf = Vec::new();
    volslice::backtest::write_plot_csv(&mut buf, &report, |r| {
        (r.predicted_volume, r.actual_avg_volume)
    })?;
    write_file(&cfg.out_dir.join("plot_volume.csv"), &buf)?;
    buf.clear();
    volslice::backtest::write_plot_csv(&mut buf, &report, |r| {
        (r.predicted_range, r.actual_ewma_range)
    })?;
    write_file(&cfg.out_dir.join("plot_range.csv"), &buf)?;
    println!(
        "backtest: {} rows, MAPE volume {:.4}%, MAPE range {:.4}%",
        report.rows.len(),
        report.mape_volume,
        report.mape_range
    );
    Ok(())
}

fn cmd_slice(
    cfg: &RunConfig,
    prediction_path: &Path,
    parent_quantity: u64,
    participation_cap: f64,
    previous_close: f64,
) -> Result<(), Error> {
    let text = std::fs::read_to_string(prediction_path).map_err(|source| Error::Io {
        path: prediction_path.display().to_string(),
        source,
    })?;
    let prediction = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    let schedule = build_schedule(
        &prediction,
        parent_quantity,
        participation_cap,
        &cfg.session,
        previous_close,
    )?;
    let mut buf = Vec::new();
    schedule.write_csv(&mut buf)?;
    write_file(&cfg.out_dir.join("schedule.csv"), &buf)?;
    println!("schedule: {} slices totaling {parent_quantity}", schedule.slices.len());
    Ok(())
}

fn exit_code_for(err: &Error) -> u8 {
    match err.root() {
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::Validation { .. }
        | Error::EmptyInput(_)
        | Error::Unsorted(_)
        | Error::Consistency(_)
        | Error::Parameter(_)
        | Error::InfeasibleSchedule { .. } => 2,
        Error::Domain(_)
        | Error::InsufficientData(_)
        | Error::DegenerateFit(_)
        | Error::BinSparsity(_)
        | Error::ModelSelection(_)
        | Error::DegenerateLikelihood(_) => 3,
        Error::InsufficientHistory(_) => 4,
        Error::Stage { .. } => 1,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let config = cli.config.as_deref();
    match &cli.command {
        Command::Aggregate { opts } => cmd_aggregate(&resolve(config, opts)?),
        Command::Fit { opts } => cmd_fit(&resolve(config, opts)?),
        Command::Predict { opts, target_date, parent_quantity, participation_cap, dump_chains } => {
            cmd_predict(
                &resolve(config, opts)?,
                *target_date,
                *parent_quantity,
                *participation_cap,
                *dump_chains,
            )
        }
        Command::Backtest { opts } => cmd_backtest(&resolve(config, opts)?),
        Command::Slice { opts, prediction, parent_quantity, participation_cap, previous_close } => {
            cmd_slice(
                &resolve(config, opts)?,
                prediction,
                *parent_quantity,
                *participation_cap,
                *previous_close,
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
