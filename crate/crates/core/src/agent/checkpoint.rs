use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Trainer, TrainingConfig};
use crate::environment::EnvConfig;
use crate::error::{Error, Result};
use crate::qnet::{Optimizer, QNetSpec, QNetwork};

pub const CHECKPOINT_FORMAT: &str = "dqn-portfolio-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned JSON model container. Floats are written in shortest
/// round-trip form, so parameters restore bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// Asset symbols in network input order.
    pub symbols: Vec<String>,
    pub network: QNetSpec,
    pub parameters: Vec<Vec<f64>>,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub steps: u64,
    pub env_config: EnvConfig,
    pub training_config: TrainingConfig,
}

impl Checkpoint {
    pub fn from_trainer(trainer: &Trainer, symbols: Vec<String>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            symbols,
            network: trainer.online().spec().clone(),
            parameters: trainer.online().params().iter().map(|p| p.to_vec()).collect(),
            optimizer: trainer.optimizer().clone(),
            seed: trainer.config().seed,
            steps: trainer.steps(),
            env_config: *trainer.env_config(),
            training_config: trainer.config().clone(),
        }
    }

    pub fn to_network(&self) -> Result<QNetwork> {
        let mut net = QNetwork::zeroed(self.network.clone())?;
        net.set_params(&self.parameters)?;
        Ok(net)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Argument(format!("not a model checkpoint: format `{}`", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Argument(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        if ckpt.symbols.len() != ckpt.network.assets {
            return Err(Error::Argument("checkpoint symbol list does not match the network".into()));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::NetworkLayout;

    fn trainer() -> Trainer {
        let mut cfg = TrainingConfig {
            num_assets: 2,
            window: 8,
            seed: 17,
            ..Default::default()
        };
        cfg.network.layout = NetworkLayout::Fitted;
        cfg.network.conv_filters = [2, 3, 3];
        cfg.network.hidden_units = 8;
        let spec = cfg.network.spec(8, 2).unwrap();
        Trainer::new(cfg, EnvConfig::default(), spec).unwrap()
    }

    #[test]
    fn round_trips_bit_exactly() {
        let t = trainer();
        let ckpt = Checkpoint::from_trainer(&t, vec!["AUSDT".into(), "BUSDT".into()]);
        let text = ckpt.to_json().unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.to_json().unwrap(), text);
        let net = back.to_network().unwrap();
        for (a, b) in net.params().iter().zip(t.online().params()) {
            assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn rejects_foreign_or_inconsistent_files() {
        let ckpt = Checkpoint::from_trainer(&trainer(), vec!["AUSDT".into(), "BUSDT".into()]);
        let mut wrong = ckpt.clone();
        wrong.version = 99;
        assert!(Checkpoint::from_json(&wrong.to_json().unwrap()).is_err());
        let mut wrong = ckpt.clone();
        wrong.format = "something-else".into();
        assert!(Checkpoint::from_json(&wrong.to_json().unwrap()).is_err());
        let mut wrong = ckpt;
        wrong.symbols.pop();
        assert!(Checkpoint::from_json(&wrong.to_json().unwrap()).is_err());
        assert!(Checkpoint::from_json("{}").is_err());
    }
}
