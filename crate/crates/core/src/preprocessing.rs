//! Price vectors and min-max normalized sliding-window history blocks.

use std::borrow::Cow;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market_data::{MarketDataset, NUM_FEATURES};
use crate::tensor::Tensor;

/// Prices of `{base currency, asset 1..m}` at one minute, in base currency.
/// Element 0 is always exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceVector(Vec<f64>);

impl PriceVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.first() != Some(&1.0) {
            return Err(Error::Argument(
                "price vector must start with the base-currency price 1".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Argument("prices must be finite and non-negative".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Number of assets, excluding the base currency.
    pub fn num_assets(&self) -> usize {
        self.0.len() - 1
    }
}

pub fn price_vector_at(dataset: &MarketDataset, t: usize) -> Result<PriceVector> {
    if t >= dataset.len() {
        return Err(Error::Index {
            index: t,
            len: dataset.len(),
        });
    }
    let mut values = Vec::with_capacity(dataset.num_assets() + 1);
    values.push(1.0);
    values.extend((0..dataset.num_assets()).map(|i| dataset.record(t, i).average_price()));
    Ok(PriceVector(values))
}

/// Normalized `(window, assets, 9)` state tensor ending at `end_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBlock {
    tensor: Tensor,
    end_index: usize,
}

impl HistoryBlock {
    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn end_index(&self) -> usize {
        self.end_index
    }

    /// `(window, assets, features)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        let s = self.tensor.shape();
        (s[0], s[1], s[2])
    }

    pub fn from_tensor(tensor: Tensor, end_index: usize) -> Result<Self> {
        if tensor.shape().len() != 3 || tensor.shape()[2] != NUM_FEATURES {
            return Err(Error::Shape(format!(
                "history block must be (window, assets, {NUM_FEATURES}), got {:?}",
                tensor.shape()
            )));
        }
        Ok(Self { tensor, end_index })
    }
}

/// Min-max normalizes every (asset, feature) column of a `(window, assets,
/// features)` tensor over the window axis. Constant columns map to zero.
pub fn normalize_block(raw: &Tensor) -> Result<Tensor> {
    let shape = raw.shape();
    if shape.len() != 3 {
        return Err(Error::Shape(format!("expected a 3-d block, got {shape:?}")));
    }
    if !raw.all_finite() {
        return Err(Error::Numeric("history block contains non-finite values".into()));
    }
    let (window, columns) = (shape[0], shape[1] * shape[2]);
    let src = raw.data();
    let mut out = vec![0.0; src.len()];
    for col in 0..columns {
        let column = (0..window).map(|row| src[row * columns + col]);
        let (lo, hi) = column.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        let range = hi - lo;
        if range > 0.0 {
            for row in 0..window {
                let k = row * columns + col;
                // clamp guards the last ulp when range underflows to subnormal
                out[k] = ((src[k] - lo) / range).clamp(0.0, 1.0);
            }
        }
    }
    Tensor::from_vec(shape, out)
}

/// Raw `(window, assets, 9)` slice of minutes `end_index - window + 1 ..= end_index`.
pub fn raw_block(dataset: &MarketDataset, end_index: usize, window: usize) -> Result<Tensor> {
    if window == 0 {
        return Err(Error::Argument("window must be at least 1".into()));
    }
    if end_index + 1 < window {
        return Err(Error::InsufficientHistory { end_index, window });
    }
    if end_index >= dataset.len() {
        return Err(Error::Index {
            index: end_index,
            len: dataset.len(),
        });
    }
    let m = dataset.num_assets();
    let start = end_index + 1 - window;
    let mut data = Vec::with_capacity(window * m * NUM_FEATURES);
    for t in start..=end_index {
        for i in 0..m {
            data.extend_from_slice(&dataset.record(t, i).features());
        }
    }
    Tensor::from_vec(&[window, m, NUM_FEATURES], data)
}

pub fn make_block(dataset: &MarketDataset, end_index: usize, window: usize) -> Result<HistoryBlock> {
    let raw = raw_block(dataset, end_index, window)?;
    Ok(HistoryBlock {
        tensor: normalize_block(&raw)?,
        end_index,
    })
}

/// All `len - window + 1` sliding-window states of a dataset, addressed by the
/// minute index of each block's final row, together with raw prices.
#[derive(Debug, Clone)]
pub struct BlockStream {
    dataset: Arc<MarketDataset>,
    window: usize,
    prices: Vec<PriceVector>,
    blocks: Option<Vec<HistoryBlock>>,
}

impl BlockStream {
    /// Lazily materializes blocks on access.
    pub fn new(dataset: Arc<MarketDataset>, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::Argument("window must be at least 1".into()));
        }
        if window > dataset.len() {
            return Err(Error::InsufficientHistory {
                end_index: dataset.len().saturating_sub(1),
                window,
            });
        }
        let prices = (0..dataset.len())
            .map(|t| price_vector_at(&dataset, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dataset,
            window,
            prices,
            blocks: None,
        })
    }

    /// Computes every block up front (in parallel).
    pub fn eager(dataset: Arc<MarketDataset>, window: usize) -> Result<Self> {
        let mut stream = Self::new(dataset, window)?;
        let blocks = (stream.first_index()..=stream.last_index())
            .into_par_iter()
            .map(|t| make_block(&stream.dataset, t, window))
            .collect::<Result<Vec<_>>>()?;
        stream.blocks = Some(blocks);
        Ok(stream)
    }

    pub fn dataset(&self) -> &MarketDataset {
        &self.dataset
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn num_assets(&self) -> usize {
        self.dataset.num_assets()
    }

    /// Number of blocks: `len - window + 1`.
    pub fn len(&self) -> usize {
        self.dataset.len() - self.window + 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// End index of the first block (`window - 1`).
    pub fn first_index(&self) -> usize {
        self.window - 1
    }

    /// End index of the final block.
    pub fn last_index(&self) -> usize {
        self.dataset.len() - 1
    }

    pub fn block(&self, end_index: usize) -> Result<Cow<'_, HistoryBlock>> {
        if end_index < self.first_index() || end_index > self.last_index() {
            return Err(Error::Index {
                index: end_index,
                len: self.dataset.len(),
            });
        }
        match &self.blocks {
            Some(blocks) => Ok(Cow::Borrowed(&blocks[end_index - self.first_index()])),
            None => make_block(&self.dataset, end_index, self.window).map(Cow::Owned),
        }
    }

    /// Raw prices at a minute index.
    pub fn prices(&self, minute: usize) -> Result<&PriceVector> {
        self.prices.get(minute).ok_or(Error::Index {
            index: minute,
            len: self.prices.len(),
        })
    }

    pub fn timestamp(&self, minute: usize) -> i64 {
        self.dataset.timestamp(minute)
    }
}
