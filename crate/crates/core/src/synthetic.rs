//! Deterministic synthetic markets for tests, demos and fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::market_data::{dataset_from_aligned, AssetSeries, KlineRecord, MarketDataset, MINUTE_MS};

/// 2021-01-01T00:00:00Z.
pub const DEFAULT_START_MS: i64 = 1_609_459_200_000;

/// A minute whose open and close equal `price`, with a narrow high/low band
/// so the OHLC mean stays at `price`.
pub fn flat_record(timestamp: i64, price: f64, volume: f64) -> KlineRecord {
    KlineRecord {
        timestamp,
        open: price,
        high: price * 1.001,
        low: price * 0.999,
        close: price,
        volume,
        num_trades: (volume * 10.0).round().max(1.0),
        quote_volume: volume * price,
        taker_buy_base: volume * 0.5,
        taker_buy_quote: volume * price * 0.5,
    }
}

fn series_from_path(symbol: &str, start_ms: i64, path: &[f64], volumes: &[f64]) -> Result<AssetSeries> {
    let records = path
        .iter()
        .zip(volumes)
        .enumerate()
        .map(|(t, (&p, &v))| flat_record(start_ms + t as i64 * MINUTE_MS, p, v))
        .collect();
    AssetSeries::new(symbol, records)
}

/// Price paths of the two-asset alternating market: moving into an even
/// minute asset A gains `up` and B loses `down`; odd minutes swap the roles.
pub fn alternating_paths(minutes: usize, up: f64, down: f64) -> [Vec<f64>; 2] {
    let mut a = Vec::with_capacity(minutes);
    let mut b = Vec::with_capacity(minutes);
    let (mut pa, mut pb) = (100.0f64, 100.0f64);
    for t in 0..minutes {
        if t > 0 {
            if t % 2 == 0 {
                pa *= 1.0 + up;
                pb *= 1.0 - down;
            } else {
                pa *= 1.0 - down;
                pb *= 1.0 + up;
            }
        }
        a.push(pa);
        b.push(pb);
    }
    [a, b]
}

/// Two assets alternating +5% / -4% in antiphase.
pub fn alternating_market(minutes: usize, start_ms: i64) -> Result<MarketDataset> {
    let [a, b] = alternating_paths(minutes, 0.05, 0.04);
    let volumes = vec![1.0; minutes];
    dataset_from_aligned(vec![
        series_from_path("AAAUSDT", start_ms, &a, &volumes)?,
        series_from_path("BBBUSDT", start_ms, &b, &volumes)?,
    ])
}

/// Geometric random walks with per-step log returns uniform in
/// `drift ± volatility`, one drift per asset spread over `[-volatility/4,
/// volatility/4]`.
pub fn random_walk_market(
    assets: usize,
    minutes: usize,
    volatility: f64,
    seed: u64,
    start_ms: i64,
) -> Result<MarketDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut series = Vec::with_capacity(assets);
    for i in 0..assets {
        let drift = volatility * 0.25 * rng.gen_range(-1.0..1.0);
        let mut price = 10.0 + 90.0 * rng.gen::<f64>();
        let mut path = Vec::with_capacity(minutes);
        let mut volumes = Vec::with_capacity(minutes);
        for t in 0..minutes {
            if t > 0 {
                price *= (drift + volatility * rng.gen_range(-1.0..1.0)).exp();
            }
            path.push(price);
            volumes.push(1.0 + 9.0 * rng.gen::<f64>());
        }
        series.push(series_from_path(&format!("SYN{i}USDT"), start_ms, &path, &volumes)?);
    }
    dataset_from_aligned(series)
}
