//! Browser demo: the normalized target policy, baseline equity curves on a
//! synthetic market, and the normalized history block the network sees.
//!
//! The functions here are plain Rust returning serializable values; the
//! `web` module wraps them for JavaScript and hands results over as JSON.

use serde::Serialize;

use dqn_portfolio::agent::{compute_target, normalized_temperature, target_policy};
use dqn_portfolio::baselines::{strategy_run, BaselineParams, Strategy};
use dqn_portfolio::evaluation::{mdd, sharpe, EquityCurve};
use dqn_portfolio::market_data::MarketDataset;
use dqn_portfolio::preprocessing::make_block;
use dqn_portfolio::synthetic::{alternating_market, random_walk_market, DEFAULT_START_MS};

#[cfg(target_arch = "wasm32")]
mod web;

pub const FEATURE_NAMES: [&str; 9] = [
    "open",
    "high",
    "low",
    "close",
    "volume",
    "trades",
    "quote volume",
    "taker base",
    "taker quote",
];

/// Upper bound on synthetic market length, to keep the page responsive.
pub const MAX_MINUTES: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyPoint {
    pub hyper_temperature: f64,
    /// Effective temperature after normalization by the mean |q|.
    pub temperature: f64,
    pub weights: Vec<f64>,
    /// Expected-SARSA target with reward 0 and discount 1.
    pub expectation: f64,
}

/// Target-policy weights of `q` at each hyper temperature.
pub fn policy_sweep(q: &[f64], hyper_temperatures: &[f64]) -> Result<Vec<PolicyPoint>, String> {
    if q.is_empty() {
        return Err("enter at least one q-value".into());
    }
    hyper_temperatures
        .iter()
        .map(|&h| {
            Ok(PolicyPoint {
                hyper_temperature: h,
                temperature: normalized_temperature(q, h).map_err(|e| e.to_string())?,
                weights: target_policy(q, h).map_err(|e| e.to_string())?,
                expectation: compute_target(0.0, q, false, 1.0, h).map_err(|e| e.to_string())?,
            })
        })
        .collect()
}

/// `count` hyper temperatures spaced evenly in log10 between `lo` and `hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyCurve {
    pub name: String,
    pub values: Vec<f64>,
    pub drawdowns: Vec<f64>,
    pub profit: f64,
    pub sharpe: Option<f64>,
    pub mdd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub symbols: Vec<String>,
    /// Mean OHLC price of every asset, rebased to 1 at the first minute.
    pub prices: Vec<Vec<f64>>,
    pub strategies: Vec<StrategyCurve>,
}

fn synthetic(kind: &str, assets: usize, minutes: usize, volatility: f64, seed: u64) -> Result<MarketDataset, String> {
    if !(2..=MAX_MINUTES).contains(&minutes) {
        return Err(format!("minutes must lie in 2..={MAX_MINUTES}"));
    }
    match kind {
        "alternating" => alternating_market(minutes, DEFAULT_START_MS),
        "random-walk" => {
            if !(1..=12).contains(&assets) {
                return Err("assets must lie in 1..=12".into());
            }
            random_walk_market(assets, minutes, volatility, seed, DEFAULT_START_MS)
        }
        other => return Err(format!("unknown market `{other}`")),
    }
    .map_err(|e| e.to_string())
}

/// Runs the four baselines over a synthetic market.
pub fn compare_baselines(
    kind: &str,
    assets: usize,
    minutes: usize,
    volatility: f64,
    seed: u64,
    eta: f64,
    epsilon: f64,
) -> Result<Comparison, String> {
    let ds = synthetic(kind, assets, minutes, volatility, seed)?;
    let prices = (0..ds.num_assets())
        .map(|i| {
            let first = ds.record(0, i).average_price();
            (0..ds.len()).map(|t| ds.record(t, i).average_price() / first).collect()
        })
        .collect();
    let strategies = [Strategy::Ubah, Strategy::Ucrp, Strategy::Eg { eta }, Strategy::Pamr { epsilon }]
        .into_iter()
        .map(|s| {
            let run = strategy_run(&ds, s, BaselineParams::default()).map_err(|e| e.to_string())?;
            let curve = EquityCurve::new(run.curve, run.timestamps).map_err(|e| e.to_string())?;
            let values = curve.values();
            Ok(StrategyCurve {
                name: s.name().to_string(),
                drawdowns: curve.drawdowns(),
                profit: values[values.len() - 1] / values[0],
                sharpe: sharpe(values).ok(),
                mdd: mdd(values),
                values: values.to_vec(),
            })
        })
        .collect::<Result<_, String>>()?;
    Ok(Comparison {
        symbols: ds.symbols(),
        prices,
        strategies,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Heatmap {
    pub window: usize,
    pub symbols: Vec<String>,
    pub features: Vec<String>,
    pub end_minute: usize,
    /// Row-major `(window, assets, features)` values in `[0, 1]`.
    pub values: Vec<f64>,
}

/// The normalized state block ending at `end_minute` of a random-walk market.
pub fn history_block(
    assets: usize,
    minutes: usize,
    seed: u64,
    window: usize,
    end_minute: usize,
) -> Result<Heatmap, String> {
    let ds = synthetic("random-walk", assets, minutes, 0.01, seed)?;
    if window == 0 || window > ds.len() {
        return Err(format!("window must lie in 1..={}", ds.len()));
    }
    let end = end_minute.clamp(window - 1, ds.len() - 1);
    let block = make_block(&ds, end, window).map_err(|e| e.to_string())?;
    Ok(Heatmap {
        window,
        symbols: ds.symbols(),
        features: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        end_minute: end,
        values: block.tensor().data().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_moves_from_greedy_to_uniform() {
        let q = [0.2, 0.9, 0.4];
        let sweep = policy_sweep(&q, &log_grid(1e-4, 1e4, 9)).unwrap();
        let cold = &sweep[0];
        assert!(cold.weights[1] > 0.999_999);
        assert!((cold.expectation - 0.9).abs() < 1e-6);
        let hot = &sweep[8];
        assert!(hot.weights.iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-3));
        for p in &sweep {
            assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // the effective temperature scales with mean |q| = 0.5
        assert!((sweep[4].temperature - 0.5).abs() < 1e-12);
        assert!(policy_sweep(&[], &[1.0]).is_err());
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(0.01, 100.0, 5);
        assert_eq!(g.len(), 5);
        assert!((g[0] - 0.01).abs() < 1e-15 && (g[2] - 1.0).abs() < 1e-12 && (g[4] - 100.0).abs() < 1e-10);
    }

    #[test]
    fn baselines_on_alternating_market() {
        let c = compare_baselines("alternating", 2, 11, 0.0, 0, 0.05, 0.5).unwrap();
        assert_eq!(c.strategies.len(), 4);
        let ucrp = c.strategies.iter().find(|s| s.name == "ucrp").unwrap();
        assert!((ucrp.profit - 1.005f64.powi(10)).abs() < 1e-12);
        assert_eq!(ucrp.mdd, 0.0);
        for s in &c.strategies {
            assert_eq!(s.values.len(), 11);
            assert_eq!(s.drawdowns.len(), 11);
        }
        assert_eq!(c.prices[0][0], 1.0);
    }

    #[test]
    fn random_walk_comparison_is_seeded() {
        let a = compare_baselines("random-walk", 3, 200, 0.01, 4, 0.05, 0.5).unwrap();
        let b = compare_baselines("random-walk", 3, 200, 0.01, 4, 0.05, 0.5).unwrap();
        assert_eq!(a, b);
        assert!(compare_baselines("random-walk", 3, 1, 0.01, 4, 0.05, 0.5).is_err());
        assert!(compare_baselines("sideways", 3, 200, 0.01, 4, 0.05, 0.5).is_err());
    }

    #[test]
    fn heatmap_is_normalized() {
        let h = history_block(4, 100, 2, 30, 1000).unwrap();
        assert_eq!(h.end_minute, 99);
        assert_eq!(h.values.len(), 30 * 4 * 9);
        assert!(h.values.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(history_block(4, 100, 2, 0, 50).is_err());
    }
}
