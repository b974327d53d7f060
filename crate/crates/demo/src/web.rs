use serde::Serialize;
use wasm_bindgen::prelude::*;

fn to_json<T: Serialize>(result: Result<T, String>) -> Result<String, JsError> {
    let value = result.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = policySweep)]
pub fn policy_sweep(q: &[f64], lo: f64, hi: f64, count: usize) -> Result<String, JsError> {
    to_json(crate::policy_sweep(q, &crate::log_grid(lo, hi, count)))
}

#[wasm_bindgen(js_name = compareBaselines)]
pub fn compare_baselines(
    kind: &str,
    assets: usize,
    minutes: usize,
    volatility: f64,
    seed: u32,
    eta: f64,
    epsilon: f64,
) -> Result<String, JsError> {
    to_json(crate::compare_baselines(kind, assets, minutes, volatility, seed as u64, eta, epsilon))
}

#[wasm_bindgen(js_name = historyBlock)]
pub fn history_block(
    assets: usize,
    minutes: usize,
    seed: u32,
    window: usize,
    end_minute: usize,
) -> Result<String, JsError> {
    to_json(crate::history_block(assets, minutes, seed as u64, window, end_minute))
}
