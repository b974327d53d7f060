//! Per-asset minute kline histories: CSV ingestion, volume ranking, and
//! alignment of ragged listings into a rectangular dataset.

mod csv_io;
#[cfg(feature = "fetch")]
pub mod fetch;

use std::cmp::Ordering;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{parse_kline_csv, read_kline_csv, write_kline_csv, KLINE_CSV_HEADER};
#[cfg(feature = "fetch")]
pub use fetch::{fetch_klines, FetchClient};

/// Spacing of the kline grid in milliseconds.
pub const MINUTE_MS: i64 = 60_000;

/// Number of trade-history properties per minute.
pub const NUM_FEATURES: usize = 9;

/// One minute of exchange trade history for one asset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlineRecord {
    /// Open time, epoch milliseconds UTC.
    pub timestamp: i64,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
    pub num_trades: f64,
    pub quote_volume: f64,
    pub taker_buy_base: f64,
    pub taker_buy_quote: f64,
}

impl KlineRecord {
    /// An all-zero record standing in for a minute before the asset was listed.
    pub fn padding(timestamp: i64) -> Self {
        Self {
            timestamp,
            open: 0.0,
            high: 0.0,
            low: 0.0,
            close: 0.0,
            volume: 0.0,
            num_trades: 0.0,
            quote_volume: 0.0,
            taker_buy_base: 0.0,
            taker_buy_quote: 0.0,
        }
    }

    /// The nine features in column order.
    pub fn features(&self) -> [f64; NUM_FEATURES] {
        [
            self.open,
            self.high,
            self.low,
            self.close,
            self.volume,
            self.num_trades,
            self.quote_volume,
            self.taker_buy_base,
            self.taker_buy_quote,
        ]
    }

    pub fn is_padding(&self) -> bool {
        self.features().iter().all(|&v| v == 0.0)
    }

    /// Mean of open, high, low and close.
    pub fn average_price(&self) -> f64 {
        (self.open + self.high + self.low + self.close) / 4.0
    }
}

/// Time-ordered minute klines of a single asset.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetSeries {
    symbol: String,
    records: Vec<KlineRecord>,
}

impl AssetSeries {
    /// Validates the minute grid: strictly increasing, no duplicates, no gaps.
    pub fn new(symbol: impl Into<String>, records: Vec<KlineRecord>) -> Result<Self> {
        for (i, pair) in records.windows(2).enumerate() {
            let (prev, next) = (pair[0].timestamp, pair[1].timestamp);
            // Data lines start at line 2 (after the header).
            let line = i as u64 + 3;
            match next.cmp(&prev) {
                Ordering::Equal => {
                    return Err(Error::DuplicateTimestamp {
                        line,
                        timestamp: next,
                    })
                }
                Ordering::Less => {
                    return Err(Error::Ordering {
                        line,
                        previous: prev,
                        timestamp: next,
                    })
                }
                Ordering::Greater if next - prev != MINUTE_MS => {
                    if (next - prev) % MINUTE_MS != 0 {
                        return Err(Error::Parse {
                            line,
                            message: format!("timestamp {next} is off the one-minute grid"),
                        });
                    }
                    return Err(Error::Gap {
                        first_missing: prev + MINUTE_MS,
                        last_missing: next - MINUTE_MS,
                    });
                }
                Ordering::Greater => {}
            }
        }
        Ok(Self {
            symbol: symbol.into(),
            records,
        })
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn records(&self) -> &[KlineRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Timestamp of the first non-padding record.
    pub fn listed_at(&self) -> Option<i64> {
        self.records
            .iter()
            .find(|r| !r.is_padding())
            .map(|r| r.timestamp)
    }

    pub fn total_volume(&self) -> f64 {
        self.records.iter().map(|r| r.volume).sum()
    }

    pub fn first_timestamp(&self) -> Option<i64> {
        self.records.first().map(|r| r.timestamp)
    }

    pub fn last_timestamp(&self) -> Option<i64> {
        self.records.last().map(|r| r.timestamp)
    }

    /// Number of leading all-zero records.
    pub fn padding_len(&self) -> usize {
        self.records.iter().take_while(|r| r.is_padding()).count()
    }

    /// Records with `start <= timestamp < end`.
    pub fn slice_time(&self, start: i64, end: i64) -> AssetSeries {
        let records = self
            .records
            .iter()
            .filter(|r| r.timestamp >= start && r.timestamp < end)
            .copied()
            .collect();
        AssetSeries {
            symbol: self.symbol.clone(),
            records,
        }
    }
}

/// A rectangular (minutes x assets x features) history, all assets on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketDataset {
    assets: Vec<AssetSeries>,
    base_currency: String,
}

impl MarketDataset {
    pub fn assets(&self) -> &[AssetSeries] {
        &self.assets
    }

    pub fn base_currency(&self) -> &str {
        &self.base_currency
    }

    pub fn num_assets(&self) -> usize {
        self.assets.len()
    }

    /// Period length in minutes.
    pub fn len(&self) -> usize {
        self.assets[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn symbols(&self) -> Vec<String> {
        self.assets.iter().map(|a| a.symbol.clone()).collect()
    }

    pub fn period_start(&self) -> i64 {
        self.timestamp(0)
    }

    /// Timestamp of the final minute.
    pub fn period_end(&self) -> i64 {
        self.timestamp(self.len() - 1)
    }

    pub fn timestamp(&self, minute: usize) -> i64 {
        self.assets[0].records[minute].timestamp
    }

    pub fn record(&self, minute: usize, asset: usize) -> &KlineRecord {
        &self.assets[asset].records[minute]
    }

    /// Restricts every asset to `start <= timestamp < end`.
    pub fn slice_time(&self, start: i64, end: i64) -> Result<MarketDataset> {
        let assets: Vec<_> = self.assets.iter().map(|a| a.slice_time(start, end)).collect();
        if assets[0].is_empty() {
            return Err(Error::EmptySeries(format!(
                "no minutes in [{start}, {end}) (dataset covers {}..={})",
                self.period_start(),
                self.period_end()
            )));
        }
        Ok(MarketDataset {
            assets,
            base_currency: self.base_currency.clone(),
        })
    }

    /// Keeps only the named assets, in the given order.
    pub fn select_symbols(&self, symbols: &[String]) -> Result<MarketDataset> {
        let assets = symbols
            .iter()
            .map(|s| {
                self.assets
                    .iter()
                    .find(|a| &a.symbol == s)
                    .cloned()
                    .ok_or_else(|| Error::Argument(format!("asset {s} not in dataset")))
            })
            .collect::<Result<Vec<_>>>()?;
        if assets.is_empty() {
            return Err(Error::Argument("no assets selected".into()));
        }
        Ok(MarketDataset {
            assets,
            base_currency: self.base_currency.clone(),
        })
    }
}

/// Loads every `*.csv` in `dir` (sorted by file name), one asset per file.
pub fn load_dir(dir: &Path) -> Result<Vec<AssetSeries>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Argument(format!(
            "no kline CSV files in {}",
            dir.display()
        )));
    }
    paths.par_iter().map(|p| parse_kline_csv(p)).collect()
}

/// The `m` series with the largest summed volume, descending; ties go to the
/// lexicographically smaller symbol.
pub fn select_top_assets(candidates: Vec<AssetSeries>, m: usize) -> Result<Vec<AssetSeries>> {
    if m > candidates.len() {
        return Err(Error::Argument(format!(
            "requested {m} assets but only {} candidates",
            candidates.len()
        )));
    }
    let mut ranked: Vec<(f64, AssetSeries)> = candidates
        .into_iter()
        .map(|a| (a.total_volume(), a))
        .collect();
    ranked.sort_by(|(va, a), (vb, b)| {
        vb.total_cmp(va).then_with(|| a.symbol.cmp(&b.symbol))
    });
    Ok(ranked.into_iter().take(m).map(|(_, a)| a).collect())
}

/// Trims every series to the earliest common final minute, then prepends
/// zero records so all series share the longest series' grid.
pub fn align_and_pad(assets: Vec<AssetSeries>) -> Result<MarketDataset> {
    if assets.is_empty() {
        return Err(Error::Argument("cannot align an empty asset list".into()));
    }
    if let Some(a) = assets.iter().find(|a| a.is_empty()) {
        return Err(Error::EmptySeries(format!("asset {} has no records", a.symbol)));
    }
    let common_end = assets
        .iter()
        .filter_map(|a| a.last_timestamp())
        .min()
        .expect("non-empty series");

    let mut trimmed = Vec::with_capacity(assets.len());
    for mut asset in assets {
        asset.records.retain(|r| r.timestamp <= common_end);
        if asset.records.is_empty() {
            return Err(Error::Argument(format!(
                "asset {} has no records at or before the common end {common_end}",
                asset.symbol
            )));
        }
        trimmed.push(asset);
    }

    let max_len = trimmed.iter().map(|a| a.len()).max().unwrap_or(0);
    let padded = trimmed
        .into_iter()
        .map(|mut asset| {
            let missing = max_len - asset.len();
            if missing > 0 {
                let first = asset.records[0].timestamp;
                let mut records: Vec<KlineRecord> = (1..=missing as i64)
                    .rev()
                    .map(|k| KlineRecord::padding(first - k * MINUTE_MS))
                    .collect();
                records.append(&mut asset.records);
                asset.records = records;
            }
            asset
        })
        .collect();

    Ok(MarketDataset {
        assets: padded,
        base_currency: "USDT".to_string(),
    })
}

/// Builds a dataset from series that already share one grid.
pub fn dataset_from_aligned(assets: Vec<AssetSeries>) -> Result<MarketDataset> {
    let first = assets
        .first()
        .ok_or_else(|| Error::Argument("empty asset list".into()))?;
    if first.is_empty() {
        return Err(Error::EmptySeries(first.symbol.clone()));
    }
    for a in &assets[1..] {
        let same_grid = a.len() == first.len()
            && a.first_timestamp() == first.first_timestamp()
            && a.last_timestamp() == first.last_timestamp();
        if !same_grid {
            return Err(Error::Argument(format!(
                "asset {} is not aligned with {}",
                a.symbol, first.symbol
            )));
        }
    }
    Ok(MarketDataset {
        assets,
        base_currency: "USDT".to_string(),
    })
}
