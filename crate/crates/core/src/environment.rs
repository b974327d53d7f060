//! The trading environment: portfolio accounting, trade execution at market
//! prices, and the amplified-and-clipped value-change reward.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocessing::{BlockStream, PriceVector};

/// Holdings of `{base currency, asset 1..m}` in units of each.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioVector(Vec<f64>);

impl PortfolioVector {
    pub fn new(amounts: Vec<f64>) -> Result<Self> {
        if amounts.is_empty() || amounts.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::Argument(
                "portfolio amounts must be non-empty, finite and non-negative".into(),
            ));
        }
        Ok(Self(amounts))
    }

    /// `(initial_amount, 0, ..., 0)` over `m` assets.
    pub fn cash_only(initial_amount: f64, m: usize) -> Self {
        let mut amounts = vec![0.0; m + 1];
        amounts[0] = initial_amount;
        Self(amounts)
    }

    pub fn amounts(&self) -> &[f64] {
        &self.0
    }

    pub fn num_assets(&self) -> usize {
        self.0.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    None,
    Buy,
    Sell,
}

/// One of the `2m + 1` discrete actions together with its trade ratio.
///
/// Action ids: `0` holds, `2b - 1` buys asset `b`, `2b` sells asset `b`
/// (assets are numbered from 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeAction {
    kind: ActionKind,
    asset: usize,
    ratio: f64,
}

impl TradeAction {
    pub fn none() -> Self {
        Self {
            kind: ActionKind::None,
            asset: 0,
            ratio: 0.0,
        }
    }

    pub fn buy(asset: usize, ratio: f64) -> Result<Self> {
        Self::trade(ActionKind::Buy, asset, ratio)
    }

    pub fn sell(asset: usize, ratio: f64) -> Result<Self> {
        Self::trade(ActionKind::Sell, asset, ratio)
    }

    fn trade(kind: ActionKind, asset: usize, ratio: f64) -> Result<Self> {
        if asset == 0 {
            return Err(Error::Argument("assets are numbered from 1".into()));
        }
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::Argument(format!("trade ratio {ratio} outside [0, 1]")));
        }
        Ok(Self { kind, asset, ratio })
    }

    /// Decodes an action id for a market of `m` assets. The ratio is carried
    /// but unused for the hold action.
    pub fn from_id(id: usize, m: usize, ratio: f64) -> Result<Self> {
        if id > 2 * m {
            return Err(Error::Argument(format!(
                "action id {id} outside [0, {}]",
                2 * m
            )));
        }
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::Argument(format!("trade ratio {ratio} outside [0, 1]")));
        }
        Ok(match id {
            0 => Self {
                kind: ActionKind::None,
                asset: 0,
                ratio,
            },
            id if id % 2 == 1 => Self::buy(id.div_ceil(2), ratio)?,
            id => Self::sell(id / 2, ratio)?,
        })
    }

    pub fn id(&self) -> usize {
        match self.kind {
            ActionKind::None => 0,
            ActionKind::Buy => 2 * self.asset - 1,
            ActionKind::Sell => 2 * self.asset,
        }
    }

    pub fn kind(&self) -> ActionKind {
        self.kind
    }

    /// Asset index in `1..=m`; 0 for the hold action.
    pub fn asset(&self) -> usize {
        self.asset
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }
}

/// What happened when an action was applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TradeStatus {
    Executed,
    Hold,
    /// Buy with no base currency, or sell with no holding.
    NoFunds,
    /// The asset has no price yet (padding prefix).
    Untradable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    /// Initial base-currency amount.
    pub initial_amount: f64,
    /// Amplification constant applied to the relative value change.
    pub beta: u32,
    pub commission_rate: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            initial_amount: 1000.0,
            beta: 5,
            commission_rate: 0.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_amount > 0.0 && self.initial_amount.is_finite()) {
            return Err(Error::Config("initial amount must be positive".into()));
        }
        if self.beta < 1 {
            return Err(Error::Config("amplification constant must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.commission_rate) {
            return Err(Error::Config("commission rate must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    pub next_state_index: usize,
    pub done: bool,
    pub total_value_after: f64,
    pub status: TradeStatus,
}

/// Portfolio value in base currency: `p . w`.
pub fn total_value(w: &PortfolioVector, p: &PriceVector) -> Result<f64> {
    if w.0.len() != p.values().len() {
        return Err(Error::Argument(format!(
            "portfolio has {} entries, price vector {}",
            w.0.len(),
            p.values().len()
        )));
    }
    Ok(w.0.iter().zip(p.values()).map(|(a, b)| a * b).sum())
}

/// Applies a trade at prices `p`. Degenerate trades leave `w` unchanged and
/// report why through the status.
pub fn execute_action(
    w: &PortfolioVector,
    p: &PriceVector,
    action: &TradeAction,
    commission_rate: f64,
) -> Result<(PortfolioVector, TradeStatus)> {
    if w.0.len() != p.values().len() {
        return Err(Error::Argument("portfolio and price dimensions differ".into()));
    }
    let b = action.asset;
    if action.kind != ActionKind::None && b > w.num_assets() {
        return Err(Error::Argument(format!("asset {b} outside 1..={}", w.num_assets())));
    }
    let keep = 1.0 - commission_rate;
    let mut next = w.0.clone();
    let status = match action.kind {
        ActionKind::None => TradeStatus::Hold,
        _ if p.values()[b] <= 0.0 => TradeStatus::Untradable,
        ActionKind::Buy if w.0[0] <= 0.0 => TradeStatus::NoFunds,
        ActionKind::Sell if w.0[b] <= 0.0 => TradeStatus::NoFunds,
        ActionKind::Buy => {
            let spend = action.ratio * w.0[0];
            next[0] = w.0[0] - spend;
            next[b] = w.0[b] + keep * spend / p.values()[b];
            TradeStatus::Executed
        }
        ActionKind::Sell => {
            let units = action.ratio * w.0[b];
            next[b] = w.0[b] - units;
            next[0] = w.0[0] + keep * units * p.values()[b];
            TradeStatus::Executed
        }
    };
    Ok((PortfolioVector(next), status))
}

/// `clip(beta * (value_after / value_before - 1), -1, 1)`.
pub fn reward(beta: u32, value_before: f64, value_after: f64) -> f64 {
    if value_before <= 0.0 {
        return 0.0;
    }
    let eta = f64::from(beta) * (value_after / value_before - 1.0);
    eta.clamp(-1.0, 1.0)
}

/// Final over initial value.
pub fn profit(curve: &[f64]) -> Result<f64> {
    let (first, last) = match (curve.first(), curve.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return Err(Error::Argument("empty equity curve".into())),
    };
    if first <= 0.0 {
        return Err(Error::Argument(format!("initial value {first} is not positive")));
    }
    Ok(last / first)
}

/// Applies `action` at the prices of `state_index`, then revalues the
/// portfolio one minute later.
pub fn step_from(
    stream: &BlockStream,
    config: &EnvConfig,
    state_index: usize,
    w: &PortfolioVector,
    action: &TradeAction,
) -> Result<(StepResult, PortfolioVector)> {
    if state_index < stream.first_index() || state_index > stream.last_index() {
        return Err(Error::State(format!("state {state_index} outside the stream")));
    }
    if state_index == stream.last_index() {
        return Err(Error::State("cannot step past the final block".into()));
    }
    let now = stream.prices(state_index)?;
    let value_before = total_value(w, now)?;
    let (next_w, status) = execute_action(w, now, action, config.commission_rate)?;
    let next_index = state_index + 1;
    let value_after = total_value(&next_w, stream.prices(next_index)?)?;
    Ok((
        StepResult {
            reward: reward(config.beta, value_before, value_after),
            next_state_index: next_index,
            done: next_index == stream.last_index(),
            total_value_after: value_after,
            status,
        },
        next_w,
    ))
}

/// Counts of degenerate trades during an episode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub executed: usize,
    pub no_funds: usize,
    pub untradable: usize,
}

/// A single-episode market simulation over a block stream.
#[derive(Debug)]
pub struct MarketEnv<'a> {
    stream: &'a BlockStream,
    config: EnvConfig,
    state: usize,
    portfolio: PortfolioVector,
    diagnostics: Diagnostics,
}

impl<'a> MarketEnv<'a> {
    pub fn new(stream: &'a BlockStream, config: EnvConfig) -> Result<Self> {
        config.validate()?;
        if stream.is_empty() {
            return Err(Error::State("empty block stream".into()));
        }
        Ok(Self {
            stream,
            config,
            state: stream.first_index(),
            portfolio: PortfolioVector::cash_only(config.initial_amount, stream.num_assets()),
            diagnostics: Diagnostics::default(),
        })
    }

    pub fn reset(&mut self) -> (usize, PortfolioVector) {
        self.state = self.stream.first_index();
        self.portfolio =
            PortfolioVector::cash_only(self.config.initial_amount, self.stream.num_assets());
        self.diagnostics = Diagnostics::default();
        (self.state, self.portfolio.clone())
    }

    pub fn step(&mut self, action: &TradeAction) -> Result<StepResult> {
        let (result, next) = step_from(
            self.stream,
            &self.config,
            self.state,
            &self.portfolio,
            action,
        )?;
        match result.status {
            TradeStatus::Executed => self.diagnostics.executed += 1,
            TradeStatus::NoFunds => self.diagnostics.no_funds += 1,
            TradeStatus::Untradable => self.diagnostics.untradable += 1,
            TradeStatus::Hold => {}
        }
        self.state = result.next_state_index;
        self.portfolio = next;
        Ok(result)
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn portfolio(&self) -> &PortfolioVector {
        &self.portfolio
    }

    pub fn total_value(&self) -> f64 {
        total_value(&self.portfolio, self.stream.prices(self.state).expect("valid state"))
            .expect("matching dimensions")
    }

    pub fn is_done(&self) -> bool {
        self.state == self.stream.last_index()
    }

    pub fn diagnostics(&self) -> Diagnostics {
        self.diagnostics
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn stream(&self) -> &'a BlockStream {
        self.stream
    }
}

/// One line of the equity-curve CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquityRow {
    pub step: usize,
    pub timestamp: i64,
    pub action_id: Option<usize>,
    pub sigma: Option<f64>,
    pub reward: f64,
    pub total_value: f64,
}

pub const EQUITY_CSV_HEADER: [&str; 6] =
    ["step", "timestamp", "action_id", "sigma", "reward", "total_value"];

pub fn write_equity_csv<W: Write>(rows: &[EquityRow], writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    wtr.write_record(EQUITY_CSV_HEADER).map_err(io)?;
    for row in rows {
        wtr.serialize(row).map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_equity_csv<R: Read>(reader: R) -> Result<Vec<EquityRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize()
        .map(|row| {
            row.map_err(|e| Error::Parse {
                line: e.position().map(|p| p.line()).unwrap_or(0),
                message: e.to_string(),
            })
        })
        .collect()
}
