use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use dqn_portfolio::agent::{run_policy, Checkpoint, Trainer, write_training_log};
use dqn_portfolio::baselines::{strategy_run, BaselineParams, Strategy};
use dqn_portfolio::config::RunConfig;
use dqn_portfolio::environment::{read_equity_csv, write_equity_csv, EquityRow};
use dqn_portfolio::evaluation::{
    build_report, cycle_profit, grid_search, BacktestReport, EquityCurve, GridSpec, ReportMeta,
};
use dqn_portfolio::market_data::{
    align_and_pad, load_dir, select_top_assets, write_kline_csv, AssetSeries, FetchClient, MarketDataset,
    MINUTE_MS,
};
use dqn_portfolio::preprocessing::BlockStream;
use dqn_portfolio::synthetic::{alternating_market, random_walk_market, DEFAULT_START_MS};
use serde_json::json;

use crate::args::*;
use crate::dates::{format_instant, parse_instant};
use crate::error::{CliError, CliResult};
use crate::manifest::{manifest_path_for, RunManifest};

const MANIFEST: &str = "manifest.json";
const EQUITY_FILE: &str = "equity.csv";
const REPORT_FILE: &str = "report.json";
const MODEL_FILE: &str = "model.json";
const TRAINING_LOG_FILE: &str = "training_log.csv";

/// Blocks are precomputed when they fit in this many bytes.
const EAGER_BLOCK_BYTES: usize = 512 << 20;

pub fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Fetch(a) => fetch(a),
        Command::Preprocess(a) => preprocess(a),
        Command::Train(a) => train(a),
        Command::Backtest(a) => backtest(a),
        Command::Baseline(a) => baseline(a),
        Command::Gridsearch(a) => gridsearch(a),
        Command::Report(a) => report(a),
        Command::Synth(a) => synth(a),
    }
}

/// Prefixes the error of an operation on a user-supplied path with the path.
fn in_path<T, E: Into<CliError>>(path: &Path, result: Result<T, E>) -> CliResult<T> {
    result.map_err(|e| {
        let e = e.into();
        let msg = format!("{}: {}", path.display(), e.message());
        match e {
            CliError::Validation(_) => CliError::Validation(msg),
            CliError::Runtime(_) => CliError::Runtime(msg),
        }
    })
}

fn bounds(period: &PeriodArgs) -> CliResult<(Option<i64>, Option<i64>)> {
    let start = period.start.as_deref().map(parse_instant).transpose()?;
    let end = period.end.as_deref().map(parse_instant).transpose()?;
    if let (Some(s), Some(e)) = (start, end) {
        if e <= s {
            return Err(CliError::validation(format!(
                "--end {} is not after --start {}",
                format_instant(e),
                format_instant(s)
            )));
        }
    }
    Ok((start, end))
}

fn slice(ds: MarketDataset, start: Option<i64>, end: Option<i64>) -> CliResult<MarketDataset> {
    if start.is_none() && end.is_none() {
        return Ok(ds);
    }
    Ok(ds.slice_time(start.unwrap_or(i64::MIN), end.unwrap_or(i64::MAX))?)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn input_files(dir: &Path, series: &[AssetSeries]) -> Vec<PathBuf> {
    series.iter().map(|s| dir.join(format!("{}.csv", s.symbol()))).collect()
}

/// Top-`m` assets by volume, aligned and padded, then restricted to the period.
fn load_market(dir: &Path, m: usize, period: &PeriodArgs) -> CliResult<(MarketDataset, Vec<PathBuf>)> {
    let (start, end) = bounds(period)?;
    let selected = select_top_assets(in_path(dir, load_dir(dir))?, m)?;
    let files = input_files(dir, &selected);
    let ds = align_and_pad(selected)?;
    Ok((slice(ds, start, end)?, files))
}

/// The named assets in the given order, aligned and padded.
fn load_symbols(dir: &Path, symbols: &[String]) -> CliResult<(MarketDataset, Vec<PathBuf>)> {
    let mut all = in_path(dir, load_dir(dir))?;
    let mut chosen = Vec::with_capacity(symbols.len());
    for s in symbols {
        let pos = all
            .iter()
            .position(|a| a.symbol() == s)
            .ok_or_else(|| CliError::validation(format!("no data file for {s} in {}", dir.display())))?;
        chosen.push(all.swap_remove(pos));
    }
    let files = input_files(dir, &chosen);
    Ok((align_and_pad(chosen)?, files))
}

fn block_stream(ds: MarketDataset, window: usize) -> CliResult<BlockStream> {
    let blocks = ds.len().saturating_sub(window) + 1;
    let bytes = blocks * window * ds.num_assets() * 9 * std::mem::size_of::<f64>();
    let ds = Arc::new(ds);
    Ok(if bytes <= EAGER_BLOCK_BYTES {
        BlockStream::eager(ds, window)?
    } else {
        BlockStream::new(ds, window)?
    })
}

fn load_run_config(path: Option<&Path>) -> CliResult<RunConfig> {
    Ok(match path {
        Some(p) => in_path(p, RunConfig::load(p))?,
        None => RunConfig::default(),
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn describe(ds: &MarketDataset) -> String {
    format!(
        "{} assets x {} minutes, {} .. {}",
        ds.num_assets(),
        ds.len(),
        format_instant(ds.period_start()),
        format_instant(ds.period_end())
    )
}

fn fetch(a: FetchArgs) -> CliResult<()> {
    let start = parse_instant(&a.start)?;
    let end = parse_instant(&a.end)?;
    create_dir(&a.out)?;
    let mut client = FetchClient::new(&a.endpoint);
    client.page_limit = a.page_limit;
    client.max_retries = a.retries;
    let mut manifest = RunManifest::new(
        "fetch",
        json!({"symbols": a.symbols, "start": start, "end": end, "endpoint": a.endpoint}),
    );
    for symbol in &a.symbols {
        let series = client.fetch(symbol, start, end)?;
        let name = format!("{symbol}.csv");
        write_kline_csv(&series, BufWriter::new(File::create(a.out.join(&name))?))?;
        println!("{symbol}: {} minutes", series.len());
        manifest = manifest.artifact(name);
    }
    manifest.write(&a.out.join(MANIFEST))
}

fn preprocess(a: PreprocessArgs) -> CliResult<()> {
    let (ds, files) = load_market(&a.data, a.assets, &a.period)?;
    if ds.len() <= a.window {
        return Err(CliError::validation(format!(
            "{} minutes cannot fill a window of {} plus one step",
            ds.len(),
            a.window
        )));
    }
    let summary = json!({
        "symbols": ds.symbols(),
        "period": {"start": ds.period_start(), "end": ds.period_end()},
        "minutes": ds.len(),
        "padding": ds.assets().iter().map(|s| (s.symbol().to_string(), json!(s.padding_len()))).collect::<serde_json::Map<_, _>>(),
        "window": a.window,
        "blocks": ds.len() - a.window + 1,
    });
    println!("{}", describe(&ds));
    let Some(out) = a.out.filter(|_| !a.check) else {
        println!("{}", serde_json::to_string_pretty(&summary)?);
        return Ok(());
    };
    create_dir(&out)?;
    let mut manifest = RunManifest::new(
        "preprocess",
        json!({"assets": a.assets, "window": a.window, "start": a.period.start, "end": a.period.end}),
    )
    .with_inputs(&files)?;
    for series in ds.assets() {
        let name = format!("{}.csv", series.symbol());
        write_kline_csv(series, BufWriter::new(File::create(out.join(&name))?))?;
        manifest = manifest.artifact(name);
    }
    write_json(&out.join("summary.json"), &summary)?;
    manifest.artifact("summary.json").write(&out.join(MANIFEST))
}

fn train(a: TrainArgs) -> CliResult<()> {
    let mut cfg = load_run_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        cfg.training.seed = seed;
    }
    if let Some(epochs) = a.epochs {
        cfg.training.epochs = epochs;
    }
    cfg.validate()?;
    let t = &cfg.training;
    let (ds, files) = load_market(&a.data, t.num_assets, &a.period)?;
    log::info!("training on {}", describe(&ds));
    let symbols = ds.symbols();
    let stream = block_stream(ds, t.window)?;
    let spec = t.network.spec(t.window, t.num_assets)?;
    let mut trainer = Trainer::new(t.clone(), cfg.env, spec)?;
    let log = trainer.train(&stream)?;

    create_dir(&a.out)?;
    Checkpoint::from_trainer(&trainer, symbols).save(&a.out.join(MODEL_FILE))?;
    write_training_log(&log, BufWriter::new(File::create(a.out.join(TRAINING_LOG_FILE))?))?;
    let losses = log.losses();
    println!(
        "trained {} steps, {} updates, final loss {}",
        trainer.steps(),
        trainer.updates(),
        losses.last().map_or("n/a".to_string(), |l| format!("{l:.6}"))
    );
    RunManifest::new("train", cfg.to_json())
        .with_inputs(&files)?
        .with_seed(t.seed)
        .artifact(MODEL_FILE)
        .artifact(TRAINING_LOG_FILE)
        .write(&a.out.join(MANIFEST))
}

fn backtest(a: BacktestArgs) -> CliResult<()> {
    let ckpt = in_path(&a.model, Checkpoint::load(&a.model))?;
    let net = ckpt.to_network()?;
    let window = ckpt.network.window;
    let (ds, mut files) = load_symbols(&a.data, &ckpt.symbols)?;
    let (start, end) = bounds(&a.period)?;
    let history_start = start.map(|s| s - (window as i64 - 1) * MINUTE_MS);
    if let Some(h) = history_start {
        if h < ds.period_start() {
            return Err(CliError::validation(format!(
                "the first decision at {} needs {} earlier minutes of history; data starts at {}",
                format_instant(start.unwrap_or(h)),
                window - 1,
                format_instant(ds.period_start())
            )));
        }
    }
    let ds = slice(ds, history_start, end)?;
    log::info!("backtesting on {}", describe(&ds));
    let stream = BlockStream::new(Arc::new(ds), window)?;
    let run = run_policy(&net, &stream, ckpt.env_config, 0.0, ckpt.seed)?;

    create_dir(&a.out)?;
    write_equity_csv(&run.rows, BufWriter::new(File::create(a.out.join(EQUITY_FILE))?))?;
    let config = RunConfig {
        training: ckpt.training_config.clone(),
        env: ckpt.env_config,
    }
    .to_json();
    let report = build_report(
        &EquityCurve::new(run.curve, run.timestamps)?,
        ReportMeta {
            strategy: "dqn".into(),
            config: config.clone(),
            seed: Some(ckpt.seed),
            curve_file: Some(EQUITY_FILE.into()),
        },
    )?;
    fs::write(a.out.join(REPORT_FILE), report.to_json()? + "\n")?;
    print_report(&report);
    files.push(a.model.clone());
    RunManifest::new("backtest", config)
        .with_inputs(&files)?
        .with_seed(ckpt.seed)
        .artifact(EQUITY_FILE)
        .artifact(REPORT_FILE)
        .write(&a.out.join(MANIFEST))
}

fn baseline(a: BaselineArgs) -> CliResult<()> {
    let strategy = match a.method {
        Method::Ubah => Strategy::Ubah,
        Method::Ucrp => Strategy::Ucrp,
        Method::Eg => Strategy::Eg { eta: a.eta },
        Method::Pamr => Strategy::Pamr { epsilon: a.epsilon },
    };
    let (ds, files) = load_market(&a.data, a.assets, &a.period)?;
    let params = BaselineParams {
        initial_value: a.initial_amount,
        include_cash: a.include_cash,
    };
    let mut config = json!({
        "method": strategy.name(),
        "symbols": ds.symbols(),
        "include_cash": a.include_cash,
        "initial_amount": a.initial_amount,
    });
    match strategy {
        Strategy::Eg { eta } => config["eta"] = json!(eta),
        Strategy::Pamr { epsilon } => config["epsilon"] = json!(epsilon),
        _ => {}
    }
    let run = strategy_run(&ds, strategy, params)?;

    create_dir(&a.out)?;
    write_equity_csv(&run.equity_rows(), BufWriter::new(File::create(a.out.join(EQUITY_FILE))?))?;
    let report = build_report(
        &EquityCurve::new(run.curve, run.timestamps)?,
        ReportMeta {
            strategy: strategy.name().into(),
            config: config.clone(),
            seed: None,
            curve_file: Some(EQUITY_FILE.into()),
        },
    )?;
    fs::write(a.out.join(REPORT_FILE), report.to_json()? + "\n")?;
    print_report(&report);
    RunManifest::new("baseline", config)
        .with_inputs(&files)?
        .artifact(EQUITY_FILE)
        .artifact(REPORT_FILE)
        .write(&a.out.join(MANIFEST))
}

fn gridsearch(a: GridArgs) -> CliResult<()> {
    let cfg = load_run_config(a.config.as_deref())?;
    let (ds, files) = load_market(&a.data, cfg.training.num_assets, &a.period)?;
    let split = match &a.split {
        Some(s) => parse_instant(s)?,
        None => ds.timestamp(ds.len() * 4 / 5),
    };
    if split <= ds.period_start() || split > ds.period_end() {
        return Err(CliError::validation(format!(
            "split {} lies outside the data period",
            format_instant(split)
        )));
    }
    let max_window = a.windows.iter().copied().max().unwrap_or(1) as i64;
    if split - (max_window - 1) * MINUTE_MS < ds.period_start() {
        return Err(CliError::validation("the training period is shorter than the largest window"));
    }
    let full = Arc::new(ds);
    let train_ds = Arc::new(full.slice_time(full.period_start(), split)?);
    let spec = GridSpec {
        windows: a.windows.clone(),
        temperatures: a.temps.clone(),
        repeats: a.repeats,
        workers: a.workers,
        base_seed: a.seed.unwrap_or(cfg.training.seed),
    };
    let result = grid_search(&spec, |window, temperature, seed| {
        let test_start = split - (window as i64 - 1) * MINUTE_MS;
        let test_ds = Arc::new(full.slice_time(test_start, i64::MAX)?);
        cycle_profit(&train_ds, &test_ds, &cfg.training, cfg.env, window, temperature, seed)
    })?;

    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_json(&a.out, &result)?;
    for cell in &result.cells {
        let mean = cell.mean_profit.map_or("failed".to_string(), |p| format!("{p:.4}"));
        println!("window {:>4}  temperature {:<8} mean profit {mean}", cell.window, cell.hyper_temperature);
    }
    if let Some(best) = result.best_cell() {
        println!("best: window {} temperature {}", best.window, best.hyper_temperature);
    }
    let mut config = cfg.to_json();
    config["grid"] = json!({"windows": a.windows, "temps": a.temps, "repeats": a.repeats, "split": split});
    RunManifest::new("gridsearch", config)
        .with_inputs(&files)?
        .with_seed(spec.base_seed)
        .artifact(crate::manifest::file_name(&a.out))
        .write(&manifest_path_for(&a.out))
}

fn print_report(r: &BacktestReport) {
    let sharpe = r.sharpe.map_or("undefined".to_string(), |s| format!("{s:.6}"));
    println!(
        "{}: {} .. {}  profit {:.4}  sharpe {sharpe}  mdd {:.4}",
        r.strategy,
        format_instant(r.period.start),
        format_instant(r.period.end),
        r.profit,
        r.mdd
    );
}

fn read_report(path: &Path) -> CliResult<BacktestReport> {
    Ok(BacktestReport::from_json(&fs::read_to_string(path)?)?)
}

fn read_curve(path: &Path) -> CliResult<Vec<EquityRow>> {
    Ok(read_equity_csv(File::open(path)?)?)
}

fn report(a: ReportArgs) -> CliResult<()> {
    let report = in_path(&a.input, read_report(&a.input))?;
    print_report(&report);
    let Some(csv_out) = a.emit_csv else {
        return Ok(());
    };
    let curve_name = report
        .curve_file
        .as_deref()
        .ok_or_else(|| CliError::validation("the report names no curve file"))?;
    let curve_path = a.input.parent().unwrap_or(Path::new(".")).join(curve_name);
    let rows = in_path(&curve_path, read_curve(&curve_path))?;
    let curve = EquityCurve::new(
        rows.iter().map(|r| r.total_value).collect(),
        rows.iter().map(|r| r.timestamp).collect(),
    )?;
    if let Some(last) = curve.values().last() {
        let profit = last / curve.values()[0];
        if profit != report.profit {
            log::warn!("curve profit {profit} differs from the reported {}", report.profit);
        }
    }

    if let Some(parent) = csv_out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let mut out = String::from("step,timestamp,total_value,drawdown\n");
    for ((row, value), dd) in rows.iter().zip(curve.values()).zip(curve.drawdowns()) {
        out.push_str(&format!("{},{},{},{}\n", row.step, row.timestamp, value, dd));
    }
    fs::write(&csv_out, out)?;
    RunManifest::new("report", json!({"in": crate::manifest::file_name(&a.input)}))
        .with_inputs(&[a.input.clone(), curve_path])?
        .artifact(crate::manifest::file_name(&csv_out))
        .write(&manifest_path_for(&csv_out))
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let start = match &a.start {
        Some(s) => parse_instant(s)?,
        None => DEFAULT_START_MS,
    };
    if start % MINUTE_MS != 0 {
        return Err(CliError::validation("--start must fall on a whole minute"));
    }
    let ds = match a.kind {
        SynthKind::Alternating => alternating_market(a.minutes, start)?,
        SynthKind::RandomWalk => random_walk_market(a.assets, a.minutes, a.volatility, a.seed, start)?,
    };
    create_dir(&a.out)?;
    let mut manifest = RunManifest::new(
        "synth",
        json!({
            "kind": format!("{:?}", a.kind).to_lowercase(),
            "minutes": a.minutes,
            "assets": ds.num_assets(),
            "volatility": a.volatility,
            "start": start,
        }),
    )
    .with_seed(a.seed);
    for series in ds.assets() {
        let name = format!("{}.csv", series.symbol());
        write_kline_csv(series, BufWriter::new(File::create(a.out.join(&name))?))?;
        manifest = manifest.artifact(name);
    }
    println!("{}", describe(&ds));
    manifest.write(&a.out.join(MANIFEST))
}
