use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{run_policy, train, PolicyRun, TrainingConfig};
use crate::environment::{profit, EnvConfig};
use crate::error::{Error, Result};
use crate::market_data::MarketDataset;
use crate::preprocessing::BlockStream;

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of repeat `repeat` in cell `cell`.
pub fn derive_seed(base_seed: u64, cell: usize, repeat: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ cell as u64) ^ repeat as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub windows: Vec<usize>,
    pub temperatures: Vec<f64>,
    pub repeats: usize,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
    pub base_seed: u64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.windows.is_empty() || self.temperatures.is_empty() {
            return Err(Error::Argument("grid axes must be non-empty".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Argument("repeats must be at least 1".into()));
        }
        if self.windows.contains(&0) || self.temperatures.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Argument("windows and temperatures must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub window: usize,
    pub hyper_temperature: f64,
    pub seeds: Vec<u64>,
    /// Per-repeat profit, null where the run failed.
    pub profits: Vec<Option<f64>>,
    /// Mean over all repeats; null if any run failed.
    pub mean_profit: Option<f64>,
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub repeats: usize,
    pub base_seed: u64,
    /// Row-major over windows, then temperatures.
    pub cells: Vec<GridCell>,
    /// Index into `cells` of the highest mean profit among complete cells.
    pub best: Option<usize>,
}

impl GridSearchResult {
    pub fn best_cell(&self) -> Option<&GridCell> {
        self.best.map(|i| &self.cells[i])
    }
}

/// Evaluates `run(window, temperature, seed) -> profit` for every cell and
/// repeat.
pub fn grid_search<F>(spec: &GridSpec, run: F) -> Result<GridSearchResult>
where
    F: Fn(usize, f64, u64) -> Result<f64> + Sync,
{
    spec.validate()?;
    let cells: Vec<(usize, f64)> = spec
        .windows
        .iter()
        .flat_map(|&w| spec.temperatures.iter().map(move |&t| (w, t)))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..spec.repeats).map(move |r| (c, r)))
        .collect();
    let execute = || -> Vec<Result<f64>> {
        jobs.par_iter()
            .map(|&(c, r)| {
                let (w, t) = cells[c];
                run(w, t, derive_seed(spec.base_seed, c, r))
            })
            .collect()
    };
    let outcomes = if spec.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(spec.workers)
            .build()
            .map_err(|e| Error::State(format!("cannot start worker pool: {e}")))?
            .install(execute)
    } else {
        execute()
    };

    let mut outcomes = outcomes.into_iter();
    let mut result_cells = Vec::with_capacity(cells.len());
    for (c, &(window, hyper_temperature)) in cells.iter().enumerate() {
        let seeds: Vec<u64> = (0..spec.repeats).map(|r| derive_seed(spec.base_seed, c, r)).collect();
        let mut profits = Vec::with_capacity(spec.repeats);
        let mut failures = Vec::new();
        for (r, outcome) in outcomes.by_ref().take(spec.repeats).enumerate() {
            match outcome {
                Ok(p) => profits.push(Some(p)),
                Err(e) => {
                    profits.push(None);
                    failures.push(format!("repeat {r}: {e}"));
                }
            }
        }
        let failed = !failures.is_empty();
        let mean_profit = (!failed).then(|| profits.iter().flatten().sum::<f64>() / spec.repeats as f64);
        result_cells.push(GridCell {
            window,
            hyper_temperature,
            seeds,
            profits,
            mean_profit,
            failed,
            failures,
        });
    }
    let best = result_cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.mean_profit.map(|p| (i, p)))
        .fold(None, |acc: Option<(usize, f64)>, (i, p)| match acc {
            Some((_, bp)) if bp >= p => acc,
            _ => Some((i, p)),
        })
        .map(|(i, _)| i);
    Ok(GridSearchResult {
        repeats: spec.repeats,
        base_seed: spec.base_seed,
        cells: result_cells,
        best,
    })
}

/// Trains on `train_data` and rolls the greedy policy over `test_data`.
pub fn train_and_backtest(
    train_data: &Arc<MarketDataset>,
    test_data: &Arc<MarketDataset>,
    config: &TrainingConfig,
    env_config: EnvConfig,
) -> Result<PolicyRun> {
    let train_stream = BlockStream::eager(Arc::clone(train_data), config.window)?;
    let (net, _) = train(&train_stream, env_config, config)?;
    let test_stream = BlockStream::new(Arc::clone(test_data), config.window)?;
    run_policy(&net, &test_stream, env_config, 0.0, config.seed)
}

/// Profit of one train/backtest cycle, for use as a grid-search job.
pub fn cycle_profit(
    train_data: &Arc<MarketDataset>,
    test_data: &Arc<MarketDataset>,
    base: &TrainingConfig,
    env_config: EnvConfig,
    window: usize,
    hyper_temperature: f64,
    seed: u64,
) -> Result<f64> {
    let config = TrainingConfig {
        window,
        hyper_temperature,
        seed,
        ..base.clone()
    };
    profit(&train_and_backtest(train_data, test_data, &config, env_config)?.curve)
}
