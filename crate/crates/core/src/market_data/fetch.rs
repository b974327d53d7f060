//! Paginated client for the exchange kline REST endpoint.
//!
//! `GET <endpoint>/klines?symbol=S&interval=1m&startTime=ms&endTime=ms&limit=n`
//! returns a JSON array of arrays:
//! `[open_time, open, high, low, close, volume, close_time, quote_volume,
//!   num_trades, taker_buy_base, taker_buy_quote, ...]`.
//! Numeric fields may arrive as JSON numbers or decimal strings.

use std::thread;
use std::time::Duration;

use serde_json::Value;

use super::{AssetSeries, KlineRecord, MINUTE_MS};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct FetchClient {
    endpoint: String,
    /// Klines requested per page.
    pub page_limit: usize,
    /// Retries after the first failed attempt of each page.
    pub max_retries: u32,
    pub backoff: Duration,
    agent: ureq::Agent,
}

impl FetchClient {
    pub fn new(endpoint: impl Into<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            page_limit: 1000,
            max_retries: 3,
            backoff: Duration::from_millis(500),
            agent,
        }
    }

    /// One-minute klines with open time in `[start, end)`.
    pub fn fetch(&self, symbol: &str, start: i64, end: i64) -> Result<AssetSeries> {
        if end <= start {
            return Err(Error::EmptySeries(format!(
                "empty interval [{start}, {end}) for {symbol}"
            )));
        }
        let mut records: Vec<KlineRecord> = Vec::new();
        let mut cursor = start;
        while cursor < end {
            let page = self.page_with_retry(symbol, cursor, end)?;
            let Some(last) = page.last().map(|r| r.timestamp) else {
                break;
            };
            records.extend(page.into_iter().filter(|r| r.timestamp >= cursor && r.timestamp < end));
            if last + MINUTE_MS <= cursor {
                return Err(Error::Protocol(format!(
                    "server did not advance past {cursor} for {symbol}"
                )));
            }
            cursor = last + MINUTE_MS;
        }
        if records.is_empty() {
            return Err(Error::EmptySeries(format!(
                "no klines returned for {symbol} in [{start}, {end})"
            )));
        }
        AssetSeries::new(symbol, records)
    }

    fn page_with_retry(&self, symbol: &str, start: i64, end: i64) -> Result<Vec<KlineRecord>> {
        let mut attempt = 0;
        loop {
            match self.page(symbol, start, end) {
                Err(e) if e.is_retryable() && attempt < self.max_retries => {
                    attempt += 1;
                    log::warn!("{symbol}: {e}; retry {attempt}/{}", self.max_retries);
                    thread::sleep(self.backoff * attempt);
                }
                other => return other,
            }
        }
    }

    fn page(&self, symbol: &str, start: i64, end: i64) -> Result<Vec<KlineRecord>> {
        let url = format!("{}/klines", self.endpoint);
        let mut response = self
            .agent
            .get(&url)
            .query("symbol", symbol)
            .query("interval", "1m")
            .query("startTime", start.to_string())
            .query("endTime", (end - 1).to_string())
            .query("limit", self.page_limit.to_string())
            .call()
            .map_err(|e| Error::Fetch(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Fetch(e.to_string()))?;
        match status {
            200..=299 => parse_page(&body),
            429 | 500..=599 => Err(Error::Fetch(format!("HTTP {status}: {}", snippet(&body)))),
            _ => Err(Error::Protocol(format!("HTTP {status}: {}", snippet(&body)))),
        }
    }
}

pub fn fetch_klines(endpoint: &str, symbol: &str, start: i64, end: i64) -> Result<AssetSeries> {
    FetchClient::new(endpoint).fetch(symbol, start, end)
}

fn snippet(body: &str) -> &str {
    let cut = body.char_indices().nth(200).map_or(body.len(), |(i, _)| i);
    &body[..cut]
}

/// Decodes one response page.
pub fn parse_page(body: &str) -> Result<Vec<KlineRecord>> {
    let value: Value = serde_json::from_str(body)
        .map_err(|e| Error::Protocol(format!("response is not JSON: {e}")))?;
    let rows = value
        .as_array()
        .ok_or_else(|| Error::Protocol("response is not a JSON array".into()))?;
    rows.iter().enumerate().map(|(i, row)| parse_row(i, row)).collect()
}

fn parse_row(index: usize, row: &Value) -> Result<KlineRecord> {
    let fields = row
        .as_array()
        .filter(|f| f.len() >= 11)
        .ok_or_else(|| Error::Protocol(format!("row {index}: expected an array of at least 11 fields")))?;
    let num = |pos: usize| -> Result<f64> {
        let v = match &fields[pos] {
            Value::Number(n) => n.as_f64(),
            Value::String(s) => s.parse::<f64>().ok(),
            _ => None,
        };
        v.filter(|x| x.is_finite() && *x >= 0.0)
            .ok_or_else(|| Error::Protocol(format!("row {index}: field {pos} is not a non-negative number")))
    };
    let timestamp = fields[0]
        .as_i64()
        .ok_or_else(|| Error::Protocol(format!("row {index}: open time is not an integer")))?;
    Ok(KlineRecord {
        timestamp,
        open: num(1)?,
        high: num(2)?,
        low: num(3)?,
        close: num(4)?,
        volume: num(5)?,
        quote_volume: num(7)?,
        num_trades: num(8)?,
        taker_buy_base: num(9)?,
        taker_buy_quote: num(10)?,
    })
}

/// Encodes records in the exchange's response shape.
pub fn encode_page(records: &[KlineRecord]) -> String {
    let rows: Vec<Value> = records
        .iter()
        .map(|r| {
            serde_json::json!([
                r.timestamp,
                r.open.to_string(),
                r.high.to_string(),
                r.low.to_string(),
                r.close.to_string(),
                r.volume.to_string(),
                r.timestamp + MINUTE_MS - 1,
                r.quote_volume.to_string(),
                r.num_trades as u64,
                r.taker_buy_base.to_string(),
                r.taker_buy_quote.to_string(),
                "0"
            ])
        })
        .collect();
    Value::Array(rows).to_string()
}
