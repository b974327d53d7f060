//! Backtest metrics (profit, Sharpe ratio, maximum drawdown), JSON reports,
//! and the window/temperature grid search.

mod grid;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use crate::environment::profit;
pub use grid::{cycle_profit, derive_seed, grid_search, train_and_backtest, GridCell, GridSearchResult, GridSpec};

/// Time-ordered portfolio values with the timestamp of each point.
#[derive(Debug, Clone, PartialEq)]
pub struct EquityCurve {
    values: Vec<f64>,
    timestamps: Vec<i64>,
}

impl EquityCurve {
    pub fn new(values: Vec<f64>, timestamps: Vec<i64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument("empty equity curve".into()));
        }
        if values.len() != timestamps.len() {
            return Err(Error::Argument(format!(
                "{} values but {} timestamps",
                values.len(),
                timestamps.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Argument("equity values must be finite and positive".into()));
        }
        Ok(Self { values, timestamps })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn returns(&self) -> Vec<f64> {
        simple_returns(&self.values)
    }

    /// Relative decline from the running peak at every point.
    pub fn drawdowns(&self) -> Vec<f64> {
        let mut peak = f64::MIN;
        self.values
            .iter()
            .map(|&v| {
                peak = peak.max(v);
                1.0 - v / peak
            })
            .collect()
    }
}

/// `W_t / W_{t-1} - 1` for every step.
pub fn simple_returns(curve: &[f64]) -> Vec<f64> {
    curve.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Mean over sample standard deviation of per-step simple returns, with a
/// zero risk-free rate and no annualization.
pub fn sharpe(curve: &[f64]) -> Result<f64> {
    if curve.len() < 3 {
        return Err(Error::Argument(format!(
            "sharpe ratio needs at least 3 curve points, got {}",
            curve.len()
        )));
    }
    sharpe_of_returns(&simple_returns(curve))
}

/// Returns whose spread is below this fraction of their magnitude count as
/// constant; the residue is rounding noise.
const RETURN_STD_FLOOR: f64 = 1e-12;

pub fn sharpe_of_returns(returns: &[f64]) -> Result<f64> {
    if returns.len() < 2 {
        return Err(Error::Argument("sharpe ratio needs at least 2 returns".into()));
    }
    let sd = sample_std(returns);
    let scale = returns.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    if !sd.is_finite() || sd <= RETURN_STD_FLOOR * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::UndefinedSharpe);
    }
    Ok(mean(returns) / sd)
}

/// Maximum drawdown `max_{t < s} (P_t - P_s) / P_t`, in one pass.
///
/// Each candidate is evaluated as `1 - P_s / P_t`, which is monotone in the
/// peak under rounding, so the running peak yields the same value as the
/// exhaustive maximum.
pub fn mdd(curve: &[f64]) -> f64 {
    let mut peak = f64::MIN;
    let mut worst = 0.0f64;
    for &v in curve {
        if v > peak {
            peak = v;
        } else {
            worst = worst.max(1.0 - v / peak);
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Period {
    /// First curve timestamp, epoch milliseconds.
    pub start: i64,
    /// Last curve timestamp, epoch milliseconds.
    pub end: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnStats {
    pub mean: f64,
    /// Sample standard deviation; null with a single return.
    pub std: Option<f64>,
    pub min: f64,
    pub max: f64,
}

impl ReturnStats {
    pub fn from_returns(returns: &[f64]) -> Result<Self> {
        if returns.is_empty() {
            return Err(Error::Argument("no returns to summarize".into()));
        }
        Ok(Self {
            mean: mean(returns),
            std: (returns.len() > 1).then(|| sample_std(returns)),
            min: returns.iter().copied().fold(f64::INFINITY, f64::min),
            max: returns.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// Identification of the run a report describes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportMeta {
    pub strategy: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub curve_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub strategy: String,
    pub period: Period,
    pub profit: f64,
    /// Null when undefined; the reason is stored under `errors.sharpe`.
    pub sharpe: Option<f64>,
    pub mdd: f64,
    pub returns: ReturnStats,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub curve_file: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub errors: BTreeMap<String, String>,
}

impl BacktestReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Computes every metric for `curve`; a metric that cannot be computed is
/// stored as null with its reason.
pub fn build_report(curve: &EquityCurve, meta: ReportMeta) -> Result<BacktestReport> {
    if curve.len() < 2 {
        return Err(Error::Argument("a report needs at least one step".into()));
    }
    let values = curve.values();
    let returns = curve.returns();
    let mut errors = BTreeMap::new();
    let sharpe = match sharpe(values) {
        Ok(s) => Some(s),
        Err(e) => {
            errors.insert("sharpe".to_string(), e.to_string());
            None
        }
    };
    Ok(BacktestReport {
        strategy: meta.strategy,
        period: Period {
            start: curve.timestamps()[0],
            end: curve.timestamps()[curve.len() - 1],
        },
        profit: profit(values)?,
        sharpe,
        mdd: mdd(values),
        returns: ReturnStats::from_returns(&returns)?,
        config: meta.config,
        seed: meta.seed,
        curve_file: meta.curve_file,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_mdd(curve: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for t in 0..curve.len() {
            for s in t + 1..curve.len() {
                worst = worst.max(1.0 - curve[s] / curve[t]);
            }
        }
        worst
    }

    fn curve_of(values: &[f64]) -> EquityCurve {
        EquityCurve::new(values.to_vec(), (0..values.len() as i64).map(|t| t * 60_000).collect()).unwrap()
    }

    #[test]
    fn sharpe_examples() {
        let c = [1.0, 1.01, 1.01 * 1.02, 1.01 * 1.02 * 1.03];
        let s = sharpe(&c).unwrap();
        assert!((s - 2.0).abs() < 1e-9, "{s}");
        assert!((sharpe_of_returns(&[0.01, 0.02, 0.03]).unwrap() - 2.0).abs() < 1e-12);

        let alternating: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 0.01 } else { -0.01 }).collect();
        assert!(sharpe_of_returns(&alternating).unwrap().abs() < 1e-12);

        assert!(matches!(sharpe_of_returns(&[0.01; 5]), Err(Error::UndefinedSharpe)));
        let compounding: Vec<f64> = (0..40).map(|t| 1000.0 * 1.008f64.powi(t)).collect();
        assert!(matches!(sharpe(&compounding), Err(Error::UndefinedSharpe)));
        assert!(matches!(sharpe(&[1.0, 2.0]), Err(Error::Argument(_))));
    }

    #[test]
    fn mdd_examples() {
        assert_eq!(mdd(&[1.0, 1.5, 0.75, 1.2]), 0.5);
        assert_eq!(mdd(&[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(mdd(&[4.0]), 0.0);
    }

    #[test]
    fn flat_curve_report() {
        let r = build_report(&curve_of(&[5.0; 4]), ReportMeta::default()).unwrap();
        assert_eq!(r.profit, 1.0);
        assert_eq!(r.mdd, 0.0);
        assert_eq!(r.sharpe, None);
        assert!(r.errors.contains_key("sharpe"));
    }

    #[test]
    fn four_point_report_matches_oracles() {
        let values = [100.0, 110.0, 99.0, 118.8];
        // returns 0.1, -0.1, 0.2
        let meta = ReportMeta {
            strategy: "ucrp".into(),
            config: serde_json::json!({"window_size": 30}),
            seed: Some(7),
            curve_file: Some("equity.csv".into()),
        };
        let r = build_report(&curve_of(&values), meta).unwrap();
        assert!((r.profit - 1.188).abs() < 1e-12);
        assert!((r.mdd - 0.1).abs() < 1e-12);
        let mean = (0.1 - 0.1 + 0.2) / 3.0;
        let sd = (((0.1f64 - mean).powi(2) + (-0.1f64 - mean).powi(2) + (0.2f64 - mean).powi(2)) / 2.0).sqrt();
        assert!((r.sharpe.unwrap() - mean / sd).abs() < 1e-9);
        assert!((r.returns.min + 0.1).abs() < 1e-12);
        assert!((r.returns.max - 0.2).abs() < 1e-12);
        assert_eq!(r.period, Period { start: 0, end: 180_000 });
    }

    #[test]
    fn report_json_round_trips() {
        let r = build_report(&curve_of(&[1.0, 1.1, 0.9, 1.3, 1.2]), ReportMeta::default()).unwrap();
        let text = r.to_json().unwrap();
        let back = BacktestReport::from_json(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_json().unwrap(), text);
        let keys: Vec<String> = serde_json::from_str::<serde_json::Value>(&text)
            .unwrap()
            .as_object()
            .unwrap()
            .keys()
            .cloned()
            .collect();
        for k in ["strategy", "period", "profit", "sharpe", "mdd", "returns", "config", "seed", "curve_file"] {
            assert!(keys.contains(&k.to_string()), "missing {k}");
        }
    }

    #[test]
    fn drawdown_series() {
        let c = curve_of(&[1.0, 2.0, 1.0, 3.0]);
        assert_eq!(c.drawdowns(), vec![0.0, 0.0, 0.5, 0.0]);
        assert!(EquityCurve::new(vec![1.0, -1.0], vec![0, 1]).is_err());
    }

    proptest! {
        #[test]
        fn streaming_mdd_is_brute_force(curve in prop::collection::vec(0.01f64..100.0, 1..120)) {
            let m = mdd(&curve);
            prop_assert_eq!(m, brute_mdd(&curve));
            prop_assert!((0.0..1.0).contains(&m));
        }

        #[test]
        fn metrics_are_scale_invariant(
            curve in prop::collection::vec(0.5f64..2.0, 3..50),
            c in prop::sample::select(vec![0.5, 2.0, 4.0, 0.25]),
        ) {
            // power-of-two factors keep the arithmetic exact
            let scaled: Vec<f64> = curve.iter().map(|v| v * c).collect();
            prop_assert_eq!(profit(&scaled).unwrap(), profit(&curve).unwrap());
            prop_assert_eq!(mdd(&scaled), mdd(&curve));
            match (sharpe(&scaled), sharpe(&curve)) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "sharpe definedness changed under scaling"),
            }
        }

        #[test]
        fn report_agrees_with_direct_metrics(curve in prop::collection::vec(0.5f64..2.0, 3..40)) {
            let r = build_report(&curve_of(&curve), ReportMeta::default()).unwrap();
            prop_assert_eq!(r.profit, profit(&curve).unwrap());
            prop_assert_eq!(r.mdd, mdd(&curve));
            prop_assert_eq!(r.sharpe, sharpe(&curve).ok());
        }
    }
}
