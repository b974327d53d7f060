//! Online portfolio-selection baselines: uniform buy-and-hold, uniform
//! constant rebalancing, exponential gradient, and passive-aggressive mean
//! reversion.
//!
//! Strategies hold value fractions over `{base currency, asset 1..m}`. By
//! default the base-currency weight is zero (fully invested). Assets still in
//! their zero-padded prefix are excluded until their first nonzero price.

mod simplex;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::environment::EquityRow;
use crate::error::{Error, Result};
use crate::market_data::MarketDataset;

pub use simplex::simplex_project;

/// Tolerance for the simplex constraint.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Non-negative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioWeights(Vec<f64>);

impl PortfolioWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Argument("empty weight vector".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Argument("weights must be finite and non-negative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::Argument(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub(crate) fn from_raw(weights: Vec<f64>) -> Self {
        Self(weights)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn is_on_simplex(&self) -> bool {
        let sum: f64 = self.0.iter().sum();
        self.0.iter().all(|w| *w >= 0.0) && (sum - 1.0).abs() <= SIMPLEX_TOLERANCE
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Multiplicative exponential-gradient update:
/// `w_i <- w_i exp(eta x_i / (w . x))`, renormalized.
pub fn eg_update(w: &PortfolioWeights, x: &[f64], eta: f64) -> Result<PortfolioWeights> {
    if w.0.len() != x.len() {
        return Err(Error::Argument("weight and relative dimensions differ".into()));
    }
    let growth = dot(&w.0, x);
    if growth == 0.0 || !growth.is_finite() {
        return Err(Error::Numeric(format!("portfolio growth {growth} is degenerate")));
    }
    let raw: Vec<f64> = w
        .0
        .iter()
        .zip(x)
        .map(|(wi, xi)| wi * (eta * xi / growth).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(PortfolioWeights(raw.into_iter().map(|v| v / total).collect()))
}

/// Passive-aggressive mean-reversion update with sensitivity `epsilon`:
/// `loss = max(0, w . x - epsilon)`, `lambda = loss / |x - mean(x)|^2`,
/// `w <- project(w - lambda (x - mean(x)))`. Skipped when `x` is constant.
pub fn pamr_update(w: &PortfolioWeights, x: &[f64], epsilon: f64) -> Result<PortfolioWeights> {
    if w.0.len() != x.len() {
        return Err(Error::Argument("weight and relative dimensions differ".into()));
    }
    let loss = (dot(&w.0, x) - epsilon).max(0.0);
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let deviation: Vec<f64> = x.iter().map(|xi| xi - mean).collect();
    let norm_sq: f64 = deviation.iter().map(|d| d * d).sum();
    if loss == 0.0 || norm_sq == 0.0 {
        return Ok(w.clone());
    }
    let lambda = loss / norm_sq;
    let stepped: Vec<f64> = w.0.iter().zip(&deviation).map(|(wi, d)| wi - lambda * d).collect();
    Ok(simplex_project(&stepped))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Strategy {
    Ubah,
    Ucrp,
    Eg { eta: f64 },
    Pamr { epsilon: f64 },
}

impl Strategy {
    pub const DEFAULT_EG_ETA: f64 = 0.05;
    pub const DEFAULT_PAMR_EPSILON: f64 = 0.5;

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Ubah => "ubah",
            Strategy::Ucrp => "ucrp",
            Strategy::Eg { .. } => "eg",
            Strategy::Pamr { .. } => "pamr",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ubah" => Ok(Strategy::Ubah),
            "ucrp" => Ok(Strategy::Ucrp),
            "eg" => Ok(Strategy::Eg {
                eta: Strategy::DEFAULT_EG_ETA,
            }),
            "pamr" => Ok(Strategy::Pamr {
                epsilon: Strategy::DEFAULT_PAMR_EPSILON,
            }),
            other => Err(Error::Argument(format!(
                "unknown baseline `{other}` (expected ubah, ucrp, eg or pamr)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    pub initial_value: f64,
    /// Treat the base currency as an investable coordinate.
    pub include_cash: bool,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            initial_value: 1000.0,
            include_cash: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRun {
    pub strategy: Strategy,
    /// Portfolio value at every minute of the dataset.
    pub curve: Vec<f64>,
    pub timestamps: Vec<i64>,
    /// Allocation held over each step (length `curve.len() - 1`), over
    /// `{base currency, assets}`.
    pub weights: Vec<PortfolioWeights>,
}

impl BaselineRun {
    /// Equity-curve rows, starting with the initial value at step 0; the
    /// reward column carries the simple return.
    pub fn equity_rows(&self) -> Vec<EquityRow> {
        self.curve
            .iter()
            .enumerate()
            .map(|(step, &value)| EquityRow {
                step,
                timestamp: self.timestamps[step],
                action_id: None,
                sigma: None,
                reward: if step == 0 { 0.0 } else { value / self.curve[step - 1] - 1.0 },
                total_value: value,
            })
            .collect()
    }
}

/// Asset prices (OHLC mean) per minute, without the base currency.
fn asset_prices(dataset: &MarketDataset) -> Vec<Vec<f64>> {
    (0..dataset.len())
        .map(|t| {
            (0..dataset.num_assets())
                .map(|i| dataset.record(t, i).average_price())
                .collect()
        })
        .collect()
}

/// Per-step price relatives over `{base currency, assets}`: element 0 is 1
/// and assets without a price on either side of the step carry 1.
pub fn price_relatives(dataset: &MarketDataset) -> Vec<Vec<f64>> {
    let prices = asset_prices(dataset);
    prices
        .windows(2)
        .map(|w| {
            std::iter::once(1.0)
                .chain(w[0].iter().zip(&w[1]).map(|(a, b)| {
                    if *a > 0.0 && *b > 0.0 {
                        b / a
                    } else {
                        1.0
                    }
                }))
                .collect()
        })
        .collect()
}

fn active_mask(prices: &[f64], include_cash: bool) -> Vec<bool> {
    std::iter::once(include_cash)
        .chain(prices.iter().map(|p| *p > 0.0))
        .collect()
}

fn restrict(v: &[f64], mask: &[bool]) -> Vec<f64> {
    v.iter().zip(mask).filter(|(_, m)| **m).map(|(x, _)| *x).collect()
}

fn expand(sub: &[f64], mask: &[bool]) -> Vec<f64> {
    let mut it = sub.iter();
    mask.iter()
        .map(|m| if *m { *it.next().expect("mask count") } else { 0.0 })
        .collect()
}

fn uniform_over(mask: &[bool]) -> Vec<f64> {
    let k = mask.iter().filter(|m| **m).count() as f64;
    mask.iter().map(|m| if *m { 1.0 / k } else { 0.0 }).collect()
}

/// Admits newly listed coordinates at weight `1/k` each (k = active count),
/// scaling existing weights down proportionally.
fn admit_new(weights: &[f64], before: &[bool], after: &[bool]) -> Vec<f64> {
    let k = after.iter().filter(|m| **m).count() as f64;
    let new = after.iter().zip(before).filter(|(a, b)| **a && !**b).count() as f64;
    if new == 0.0 {
        return weights.to_vec();
    }
    let keep = 1.0 - new / k;
    weights
        .iter()
        .zip(before.iter().zip(after))
        .map(|(w, (b, a))| match (b, a) {
            (true, _) => w * keep,
            (false, true) => 1.0 / k,
            (false, false) => 0.0,
        })
        .collect()
}

/// Runs a baseline over the whole dataset with zero transaction cost.
pub fn strategy_run(dataset: &MarketDataset, strategy: Strategy, params: BaselineParams) -> Result<BaselineRun> {
    if !(params.initial_value > 0.0) {
        return Err(Error::Argument("initial value must be positive".into()));
    }
    let prices = asset_prices(dataset);
    let timestamps: Vec<i64> = (0..dataset.len()).map(|t| dataset.timestamp(t)).collect();
    let mut mask = active_mask(&prices[0], params.include_cash);
    let listed_assets = mask[1..].iter().filter(|m| **m).count();
    if listed_assets == 0 {
        return Err(Error::Argument(
            "no asset has a nonzero price at the first minute".into(),
        ));
    }

    if strategy == Strategy::Ubah {
        return Ok(ubah(&prices, &mask, params.initial_value, timestamps));
    }

    let relatives = price_relatives(dataset);
    let mut b = uniform_over(&mask);
    let mut curve = Vec::with_capacity(prices.len());
    let mut weights = Vec::with_capacity(relatives.len());
    let mut value = params.initial_value;
    curve.push(value);
    for (t, x) in relatives.iter().enumerate() {
        weights.push(PortfolioWeights(b.clone()));
        value *= dot(&b, x);
        curve.push(value);

        let sub_b = PortfolioWeights(restrict(&b, &mask));
        let sub_x = restrict(x, &mask);
        let updated = match strategy {
            Strategy::Ucrp | Strategy::Ubah => uniform_over(&mask),
            Strategy::Eg { eta } => expand(&eg_update(&sub_b, &sub_x, eta)?.0, &mask),
            Strategy::Pamr { epsilon } => expand(&pamr_update(&sub_b, &sub_x, epsilon)?.0, &mask),
        };
        let next_mask = active_mask(&prices[t + 1], params.include_cash);
        b = if strategy == Strategy::Ucrp {
            uniform_over(&next_mask)
        } else {
            admit_new(&updated, &mask, &next_mask)
        };
        mask = next_mask;
    }
    Ok(BaselineRun {
        strategy,
        curve,
        timestamps,
        weights,
    })
}

fn ubah(prices: &[Vec<f64>], mask: &[bool], initial: f64, timestamps: Vec<i64>) -> BaselineRun {
    let start = uniform_over(mask);
    let cash = start[0] * initial;
    let units: Vec<f64> = prices[0]
        .iter()
        .zip(&start[1..])
        .map(|(p, w)| if *p > 0.0 { w * initial / p } else { 0.0 })
        .collect();
    let value_at = |p: &[f64]| cash + units.iter().zip(p).map(|(u, pi)| u * pi).sum::<f64>();
    let curve: Vec<f64> = prices.iter().map(|p| value_at(p)).collect();
    let weights = prices[..prices.len() - 1]
        .iter()
        .zip(&curve)
        .map(|(p, v)| {
            let mut w = vec![cash / v];
            w.extend(units.iter().zip(p).map(|(u, pi)| u * pi / v));
            PortfolioWeights(w)
        })
        .collect();
    BaselineRun {
        strategy: Strategy::Ubah,
        curve,
        timestamps,
        weights,
    }
}

/// Uniform buy-and-hold equity curve.
pub fn ubah_run(dataset: &MarketDataset) -> Result<Vec<f64>> {
    Ok(strategy_run(dataset, Strategy::Ubah, BaselineParams::default())?.curve)
}

/// Uniform constant-rebalanced equity curve.
pub fn ucrp_run(dataset: &MarketDataset) -> Result<Vec<f64>> {
    Ok(strategy_run(dataset, Strategy::Ucrp, BaselineParams::default())?.curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::Strategy;
    use crate::market_data::{dataset_from_aligned, AssetSeries, KlineRecord, MINUTE_MS};
    use proptest::prelude::*;

    fn flat(symbol: &str, path: &[f64]) -> AssetSeries {
        let recs = path
            .iter()
            .enumerate()
            .map(|(t, &p)| {
                let mut r = KlineRecord::padding(t as i64 * MINUTE_MS);
                r.open = p;
                r.high = p;
                r.low = p;
                r.close = p;
                r.volume = if p > 0.0 { 1.0 } else { 0.0 };
                r
            })
            .collect();
        AssetSeries::new(symbol, recs).unwrap()
    }

    fn market(paths: &[&[f64]]) -> MarketDataset {
        dataset_from_aligned(
            paths
                .iter()
                .enumerate()
                .map(|(i, p)| flat(&format!("A{i}"), p))
                .collect(),
        )
        .unwrap()
    }

    fn profit(curve: &[f64]) -> f64 {
        curve.last().unwrap() / curve[0]
    }

    #[test]
    fn ubah_examples() {
        assert_eq!(profit(&ubah_run(&market(&[&[1.0, 2.0], &[3.0, 6.0]])).unwrap()), 2.0);
        assert_eq!(profit(&ubah_run(&market(&[&[1.0, 2.0], &[4.0, 4.0]])).unwrap()), 1.5);
        let flat_curve = ubah_run(&market(&[&[5.0; 4], &[2.0; 4]])).unwrap();
        assert!(flat_curve.iter().all(|v| *v == 1000.0));
    }

    #[test]
    fn ucrp_examples() {
        let one = ucrp_run(&market(&[&[1.0, 1.2], &[1.0, 0.8]])).unwrap();
        assert_eq!(profit(&one), 1.0);

        let alt = market(&[&[1.0, 2.0, 1.0], &[1.0, 0.5, 1.0]]);
        assert_eq!(profit(&ucrp_run(&alt).unwrap()), 1.5625);
        assert_eq!(profit(&ubah_run(&alt).unwrap()), 1.0);

        let twins = market(&[&[1.0, 1.5, 0.9, 2.0], &[1.0, 1.5, 0.9, 2.0]]);
        assert_eq!(ubah_run(&twins).unwrap(), ucrp_run(&twins).unwrap());
    }

    #[test]
    fn eg_examples() {
        let w = PortfolioWeights::uniform(2);
        assert_eq!(eg_update(&w, &[2.0, 1.0], 0.0).unwrap(), w);
        let u = eg_update(&w, &[2.0, 1.0], 0.05).unwrap();
        assert!((u.values()[0] - 0.5083325618141192).abs() < 1e-12);
        assert!((u.values()[1] - (1.0 - 0.5083325618141192)).abs() < 1e-12);
        let w3 = PortfolioWeights::new(vec![0.2, 0.3, 0.5]).unwrap();
        let same = eg_update(&w3, &[1.3; 3], 0.05).unwrap();
        for (a, b) in same.values().iter().zip(w3.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        let zero = PortfolioWeights::new(vec![1.0, 0.0]).unwrap();
        assert!(matches!(eg_update(&zero, &[0.0, 1.0], 0.05), Err(Error::Numeric(_))));
    }

    #[test]
    fn pamr_examples() {
        let w = PortfolioWeights::uniform(2);
        // w.x = 1.0 <= 1.2: hinge inactive
        assert_eq!(pamr_update(&w, &[1.2, 0.8], 1.2).unwrap(), w);
        assert_eq!(pamr_update(&w, &[1.2, 0.8], 0.5).unwrap().values(), &[0.0, 1.0]);
        assert_eq!(pamr_update(&w, &[1.1, 1.1], 0.5).unwrap(), w);
    }

    #[test]
    fn hand_computed_three_step_curves() {
        // relatives: (2, 0.5), (0.5, 2), (1, 1)
        let ds = market(&[&[1.0, 2.0, 1.0, 1.0], &[1.0, 0.5, 1.0, 1.0]]);
        let ucrp = strategy_run(&ds, Strategy::Ucrp, BaselineParams::default()).unwrap();
        assert_eq!(ucrp.curve, vec![1000.0, 1250.0, 1562.5, 1562.5]);
        let ubah = strategy_run(&ds, Strategy::Ubah, BaselineParams::default()).unwrap();
        assert_eq!(ubah.curve, vec![1000.0, 1250.0, 1000.0, 1000.0]);

        // pamr: step 1 from (0.5, 0.5): growth 1.25, loss 0.75, dev (0.75, -0.75),
        // lambda = 0.75 / 1.125, pre-projection (0, 1) -> (0, 1)
        let pamr = strategy_run(&ds, Strategy::Pamr { epsilon: 0.5 }, BaselineParams::default()).unwrap();
        assert_eq!(pamr.weights[1].values(), &[0.0, 0.0, 1.0]);
        assert_eq!(pamr.curve[..3], [1000.0, 1250.0, 2500.0]);
    }

    #[test]
    fn late_listing_enters_when_priced() {
        let ds = market(&[&[1.0, 1.0, 1.0, 2.0], &[0.0, 0.0, 4.0, 4.0]]);
        let ucrp = strategy_run(&ds, Strategy::Ucrp, BaselineParams::default()).unwrap();
        assert_eq!(ucrp.weights[0].values(), &[0.0, 1.0, 0.0]);
        assert_eq!(ucrp.weights[2].values(), &[0.0, 0.5, 0.5]);
        assert_eq!(ucrp.curve, vec![1000.0, 1000.0, 1000.0, 1500.0]);

        let eg = strategy_run(&ds, Strategy::Eg { eta: 0.05 }, BaselineParams::default()).unwrap();
        assert!(eg.weights.iter().all(|w| w.is_on_simplex()));
        assert_eq!(eg.weights[1].values()[2], 0.0);
        assert!(eg.weights[2].values()[2] > 0.0);

        let ubah = strategy_run(&ds, Strategy::Ubah, BaselineParams::default()).unwrap();
        assert_eq!(ubah.curve.last(), Some(&2000.0));

        let dead = market(&[&[0.0, 1.0]]);
        assert!(strategy_run(&dead, Strategy::Ubah, BaselineParams::default()).is_err());
    }

    #[test]
    fn cash_inclusive_variant() {
        let ds = market(&[&[1.0, 2.0]]);
        let params = BaselineParams {
            include_cash: true,
            ..Default::default()
        };
        let ucrp = strategy_run(&ds, Strategy::Ucrp, params).unwrap();
        assert_eq!(ucrp.curve, vec![1000.0, 1500.0]);
        let ubah = strategy_run(&ds, Strategy::Ubah, params).unwrap();
        assert_eq!(ubah.curve, vec![1000.0, 1500.0]);
    }

    #[test]
    fn single_asset_strategies_coincide() {
        let ds = market(&[&[1.0, 1.3, 0.7, 0.9, 1.4]]);
        let p = BaselineParams::default();
        let ubah = strategy_run(&ds, Strategy::Ubah, p).unwrap().curve;
        let ucrp = strategy_run(&ds, Strategy::Ucrp, p).unwrap().curve;
        for eta in [0.0, 0.05, 3.0] {
            let eg = strategy_run(&ds, Strategy::Eg { eta }, p).unwrap().curve;
            for ((a, b), c) in ubah.iter().zip(&ucrp).zip(&eg) {
                assert!((a - b).abs() < 1e-9 && (a - c).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn strategy_names_parse() {
        for s in ["ubah", "UCRP", "eg", "pamr"] {
            let parsed: Strategy = s.parse().unwrap();
            assert_eq!(parsed.name(), s.to_lowercase());
        }
        assert!("bcrp".parse::<Strategy>().is_err());
    }

    proptest! {
        #[test]
        fn equity_rows_report_simple_returns(path in prop::collection::vec(0.5f64..2.0, 2..20)) {
            let ds = market(&[&path]);
            let run = strategy_run(&ds, Strategy::Ucrp, BaselineParams::default()).unwrap();
            let rows = run.equity_rows();
            prop_assert_eq!(rows.len(), path.len());
            for (r, v) in rows.iter().zip(&run.curve) {
                prop_assert_eq!(r.total_value, *v);
            }
            for (r, w) in rows[1..].iter().zip(run.curve.windows(2)) {
                prop_assert_eq!(r.reward, w[1] / w[0] - 1.0);
            }
        }
    }
}
