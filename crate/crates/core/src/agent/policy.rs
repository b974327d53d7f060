//! Behavior policy (epsilon-greedy with a softmax trade ratio) and the
//! temperature-normalized softmax target policy.

use rand::Rng;

use crate::error::{Error, Result};

/// Floor applied to the normalized temperature when every q-value is zero.
pub const MIN_TEMPERATURE: f64 = 1e-12;

/// `softmax(values / temperature)`, shifted by the maximum for stability.
pub fn softmax(values: &[f64], temperature: f64) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = values.iter().map(|v| ((v - max) / temperature).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionChoice {
    pub action_id: usize,
    /// Softmax weight of the chosen action's q-value, used as the trade ratio.
    pub sigma: f64,
    pub explored: bool,
}

/// With probability `epsilon` a uniformly random action, otherwise the
/// greedy one. The trade ratio is the plain softmax of the q-values at the
/// chosen action.
pub fn select_action<R: Rng + ?Sized>(q_values: &[f64], epsilon: f64, rng: &mut R) -> Result<ActionChoice> {
    if q_values.is_empty() {
        return Err(Error::Argument("empty q-value vector".into()));
    }
    if q_values.iter().any(|q| !q.is_finite()) {
        return Err(Error::Numeric("non-finite q-value".into()));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Argument(format!("epsilon {epsilon} outside [0, 1]")));
    }
    let explored = rng.gen::<f64>() < epsilon;
    let action_id = if explored {
        rng.gen_range(0..q_values.len())
    } else {
        argmax(q_values)
    };
    let sigma = softmax(q_values, 1.0)[action_id];
    Ok(ActionChoice {
        action_id,
        sigma,
        explored,
    })
}

/// `mean(|q|) * hyper_temperature` over every action value, floored at
/// [`MIN_TEMPERATURE`].
pub fn normalized_temperature(q_next: &[f64], hyper_temperature: f64) -> Result<f64> {
    if !(hyper_temperature > 0.0) || !hyper_temperature.is_finite() {
        return Err(Error::Argument(format!(
            "hyper temperature must be positive, got {hyper_temperature}"
        )));
    }
    if q_next.is_empty() {
        return Err(Error::Argument("empty q-value vector".into()));
    }
    if q_next.iter().any(|q| !q.is_finite()) {
        return Err(Error::Numeric("non-finite q-value".into()));
    }
    let mean_abs = q_next.iter().map(|q| q.abs()).sum::<f64>() / q_next.len() as f64;
    Ok((mean_abs * hyper_temperature).max(MIN_TEMPERATURE))
}

/// Target-policy weights over next-state actions.
pub fn target_policy(q_next: &[f64], hyper_temperature: f64) -> Result<Vec<f64>> {
    let tau = normalized_temperature(q_next, hyper_temperature)?;
    Ok(softmax(q_next, tau))
}

/// Expected-SARSA target under the normalized softmax policy:
/// `r + gamma * sum_a pi(a) q_next(a)`, or `r` on terminal transitions.
pub fn compute_target(
    reward: f64,
    q_next: &[f64],
    done: bool,
    discount: f64,
    hyper_temperature: f64,
) -> Result<f64> {
    if !reward.is_finite() {
        return Err(Error::Numeric("non-finite reward".into()));
    }
    if done {
        return Ok(reward);
    }
    let pi = target_policy(q_next, hyper_temperature)?;
    let expectation: f64 = pi.iter().zip(q_next).map(|(p, q)| p * q).sum();
    Ok(reward + discount * expectation)
}
