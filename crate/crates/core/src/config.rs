//! Flat `key = value` run configuration.
//!
//! Keys are snake_case, matched case-insensitively; `#` starts a comment.
//! Unset keys keep their defaults.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde_json::{json, Map, Value};

use crate::agent::{NetworkLayout, TrainingConfig};
use crate::environment::EnvConfig;
use crate::error::{Error, Result};
use crate::qnet::{OptimizerConfig, OutputActivation};

pub const VALID_KEYS: [&str; 26] = [
    "number_of_assets",
    "window_size",
    "memory_size",
    "discount_factor",
    "minibatch_size",
    "update_frequency",
    "initial_exploration",
    "final_exploration",
    "exploration_annealing_length",
    "update_start_size",
    "target_network_update_frequency",
    "variable_ratio_amplification_constant",
    "hyper_temperature",
    "epochs",
    "seed",
    "initial_amount",
    "commission_rate",
    "optimizer",
    "learning_rate",
    "rmsprop_decay",
    "rmsprop_epsilon",
    "output_activation",
    "network_layout",
    "conv_filters",
    "hidden_units",
    "td_error_clip",
];

/// Learning rate, decay and epsilon of the default optimizer.
const RMSPROP_DEFAULTS: (f64, f64, f64) = (0.00025, 0.95, 0.01);
const DEFAULT_SGD_LEARNING_RATE: f64 = 0.00025;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub training: TrainingConfig,
    pub env: EnvConfig,
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("invalid value `{raw}` for `{key}`")))
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean `{raw}` for `{key}`"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut optimizer_kind: Option<String> = None;
        let mut learning_rate: Option<f64> = None;
        let mut decay: Option<f64> = None;
        let mut epsilon: Option<f64> = None;

        for (n, line) in text.lines().enumerate() {
            let line_no = n as u64 + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, raw) = content.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected `key = value`, got `{content}`"),
            })?;
            let key = key.trim().to_ascii_lowercase();
            let raw = raw.trim();
            let t = &mut cfg.training;
            match key.as_str() {
                "number_of_assets" => t.num_assets = parse_value(&key, raw)?,
                "window_size" => t.window = parse_value(&key, raw)?,
                "memory_size" => t.memory_size = parse_value(&key, raw)?,
                "discount_factor" => t.discount = parse_value(&key, raw)?,
                "minibatch_size" => t.minibatch = parse_value(&key, raw)?,
                "update_frequency" => t.update_frequency = parse_value(&key, raw)?,
                "initial_exploration" => t.initial_exploration = parse_value(&key, raw)?,
                "final_exploration" => t.final_exploration = parse_value(&key, raw)?,
                "exploration_annealing_length" => t.annealing_steps = parse_value(&key, raw)?,
                "update_start_size" => t.update_start = parse_value(&key, raw)?,
                "target_network_update_frequency" => t.target_sync = parse_value(&key, raw)?,
                "variable_ratio_amplification_constant" => cfg.env.beta = parse_value(&key, raw)?,
                "hyper_temperature" => t.hyper_temperature = parse_value(&key, raw)?,
                "epochs" => t.epochs = parse_value(&key, raw)?,
                "seed" => t.seed = parse_value(&key, raw)?,
                "initial_amount" => cfg.env.initial_amount = parse_value(&key, raw)?,
                "commission_rate" => cfg.env.commission_rate = parse_value(&key, raw)?,
                "optimizer" => optimizer_kind = Some(raw.to_ascii_lowercase()),
                "learning_rate" => learning_rate = Some(parse_value(&key, raw)?),
                "rmsprop_decay" => decay = Some(parse_value(&key, raw)?),
                "rmsprop_epsilon" => epsilon = Some(parse_value(&key, raw)?),
                "output_activation" => {
                    t.network.output = match raw.to_ascii_lowercase().as_str() {
                        "sigmoid" => OutputActivation::Sigmoid,
                        "linear" => OutputActivation::Linear,
                        _ => return Err(Error::Config(format!("invalid output_activation `{raw}`"))),
                    }
                }
                "network_layout" => {
                    t.network.layout = match raw.to_ascii_lowercase().as_str() {
                        "reference" => NetworkLayout::Reference,
                        "fitted" => NetworkLayout::Fitted,
                        _ => return Err(Error::Config(format!("invalid network_layout `{raw}`"))),
                    }
                }
                "conv_filters" => {
                    let parts: Vec<usize> = raw
                        .split(',')
                        .map(|p| parse_value(&key, p.trim()))
                        .collect::<Result<_>>()?;
                    t.network.conv_filters = parts.try_into().map_err(|_| {
                        Error::Config("conv_filters needs exactly three comma-separated counts".into())
                    })?;
                }
                "hidden_units" => t.network.hidden_units = parse_value(&key, raw)?,
                "td_error_clip" => t.td_error_clip = parse_bool(&key, raw)?,
                other => {
                    return Err(Error::Config(format!(
                        "unknown key `{other}` on line {line_no}; valid keys: {}",
                        VALID_KEYS.join(", ")
                    )))
                }
            }
        }

        let t = &mut cfg.training;
        t.optimizer = match optimizer_kind.as_deref().unwrap_or("rmsprop") {
            "sgd" => OptimizerConfig::Sgd {
                learning_rate: learning_rate.unwrap_or(DEFAULT_SGD_LEARNING_RATE),
            },
            "rmsprop" => OptimizerConfig::RmsProp {
                learning_rate: learning_rate.unwrap_or(RMSPROP_DEFAULTS.0),
                decay: decay.unwrap_or(RMSPROP_DEFAULTS.1),
                epsilon: epsilon.unwrap_or(RMSPROP_DEFAULTS.2),
            },
            other => return Err(Error::Config(format!("unknown optimizer `{other}` (sgd or rmsprop)"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        self.env.validate()
    }

    /// Every key with its resolved value, in [`VALID_KEYS`] order.
    pub fn to_json(&self) -> Value {
        let t = &self.training;
        let (optimizer, decay, epsilon) = match t.optimizer {
            OptimizerConfig::Sgd { .. } => ("sgd", Value::Null, Value::Null),
            OptimizerConfig::RmsProp { decay, epsilon, .. } => ("rmsprop", json!(decay), json!(epsilon)),
        };
        let entries = [
            json!(t.num_assets),
            json!(t.window),
            json!(t.memory_size),
            json!(t.discount),
            json!(t.minibatch),
            json!(t.update_frequency),
            json!(t.initial_exploration),
            json!(t.final_exploration),
            json!(t.annealing_steps),
            json!(t.update_start),
            json!(t.target_sync),
            json!(self.env.beta),
            json!(t.hyper_temperature),
            json!(t.epochs),
            json!(t.seed),
            json!(self.env.initial_amount),
            json!(self.env.commission_rate),
            json!(optimizer),
            json!(t.optimizer.learning_rate()),
            decay,
            epsilon,
            json!(t.network.output),
            json!(t.network.layout),
            json!(t.network.conv_filters),
            json!(t.network.hidden_units),
            json!(t.td_error_clip),
        ];
        let map: Map<String, Value> = VALID_KEYS
            .iter()
            .map(|k| k.to_string())
            .zip(entries)
            .collect();
        Value::Object(map)
    }

    /// Renders the resolved configuration as a loadable file.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Value::Object(map) = self.to_json() {
            for key in VALID_KEYS {
                let value = match &map[key] {
                    Value::Null => continue,
                    Value::String(s) => s.clone(),
                    Value::Array(xs) => xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
                    other => other.to_string(),
                };
                let _ = writeln!(out, "{key} = {value}");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_reference_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        let t = &cfg.training;
        assert_eq!(t.num_assets, 8);
        assert_eq!(t.window, 30);
        assert_eq!(t.memory_size, 100_000);
        assert_eq!(t.discount, 0.99);
        assert_eq!(t.minibatch, 32);
        assert_eq!(t.update_frequency, 4);
        assert_eq!(t.initial_exploration, 1.0);
        assert_eq!(t.final_exploration, 0.1);
        assert_eq!(t.annealing_steps, 1_000_000);
        assert_eq!(t.update_start, 20_000);
        assert_eq!(t.target_sync, 20_000);
        assert_eq!(cfg.env.beta, 5);
        assert_eq!(t.hyper_temperature, 0.25);
    }

    #[test]
    fn single_override_changes_one_key() {
        let base = RunConfig::default().to_json();
        let cfg = RunConfig::parse("# tuned\nWindow_Size = 10   # shorter\n").unwrap();
        let got = cfg.to_json();
        let diff: Vec<&String> = base
            .as_object()
            .unwrap()
            .iter()
            .filter(|(k, v)| got[k.as_str()] != **v)
            .map(|(k, _)| k)
            .collect();
        assert_eq!(diff, vec!["window_size"]);
        assert_eq!(cfg.training.window, 10);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RunConfig::parse("hyper_temperature = -1"), Err(Error::Config(_))));
        let err = RunConfig::parse("learning_speed = 3").unwrap_err();
        assert!(err.to_string().contains("hyper_temperature"));
        assert!(matches!(RunConfig::parse("window_size"), Err(Error::Parse { line: 1, .. })));
        assert!(RunConfig::parse("window_size = ten").is_err());
        assert!(RunConfig::parse("conv_filters = 1,2").is_err());
        assert!(RunConfig::parse("optimizer = adam").is_err());
    }

    #[test]
    fn optimizer_and_network_keys() {
        let cfg = RunConfig::parse(
            "optimizer = sgd\nlearning_rate = 0.01\nnetwork_layout = fitted\nconv_filters = 4, 8, 8\n\
             hidden_units = 32\noutput_activation = linear\ntd_error_clip = true",
        )
        .unwrap();
        assert_eq!(cfg.training.optimizer, OptimizerConfig::Sgd { learning_rate: 0.01 });
        assert_eq!(cfg.training.network.conv_filters, [4, 8, 8]);
        assert_eq!(cfg.training.network.layout, NetworkLayout::Fitted);
        assert!(cfg.training.td_error_clip);
    }

    #[test]
    fn optimizer_defaults_agree() {
        let (learning_rate, decay, epsilon) = RMSPROP_DEFAULTS;
        assert_eq!(
            OptimizerConfig::default(),
            OptimizerConfig::RmsProp { learning_rate, decay, epsilon }
        );
    }

    #[test]
    fn text_form_round_trips() {
        let cfg = RunConfig::parse("window_size = 12\nlearning_rate = 0.001\nconv_filters = 4,8,8").unwrap();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }
}

