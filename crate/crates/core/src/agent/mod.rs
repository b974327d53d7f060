//! The DQN trading agent.

mod checkpoint;
mod policy;
mod replay;
mod schedule;
mod trainer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qnet::{OptimizerConfig, OutputActivation, QNetSpec};

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use policy::{
    argmax, compute_target, normalized_temperature, select_action, softmax, target_policy,
    ActionChoice, MIN_TEMPERATURE,
};
pub use replay::{Experience, ReplayBuffer};
pub use schedule::EpsilonSchedule;
pub use trainer::{
    run_policy, train, write_training_log, PolicyRun, Trainer, TrainingLog, TrainingLogRow,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkLayout {
    /// Reference filters; fails if the input is too small for them.
    Reference,
    /// Reference filters clamped to the input extent.
    Fitted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub layout: NetworkLayout,
    pub conv_filters: [usize; 3],
    pub hidden_units: usize,
    pub output: OutputActivation,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            layout: NetworkLayout::Reference,
            conv_filters: [32, 64, 64],
            hidden_units: 512,
            output: OutputActivation::Sigmoid,
        }
    }
}

impl NetworkConfig {
    pub fn spec(&self, window: usize, assets: usize) -> Result<QNetSpec> {
        let base = match self.layout {
            NetworkLayout::Reference => QNetSpec::reference(window, assets),
            NetworkLayout::Fitted => QNetSpec::fitted(window, assets),
        };
        let mut spec = base.with_filters(&self.conv_filters)?;
        spec.hidden = self.hidden_units;
        spec.output = self.output;
        spec.shape_chain()?;
        Ok(spec)
    }
}

/// Training hyperparameters; defaults follow the reference schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub num_assets: usize,
    pub window: usize,
    pub memory_size: usize,
    pub discount: f64,
    pub minibatch: usize,
    /// Actions between parameter updates.
    pub update_frequency: u64,
    pub initial_exploration: f64,
    pub final_exploration: f64,
    pub annealing_steps: u64,
    /// Experiences collected before updates begin.
    pub update_start: usize,
    /// Steps between target-network copies.
    pub target_sync: u64,
    pub hyper_temperature: f64,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub network: NetworkConfig,
    /// Clip TD errors to [-1, 1] before backpropagation.
    pub td_error_clip: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            num_assets: 8,
            window: 30,
            memory_size: 100_000,
            discount: 0.99,
            minibatch: 32,
            update_frequency: 4,
            initial_exploration: 1.0,
            final_exploration: 0.1,
            annealing_steps: 1_000_000,
            update_start: 20_000,
            target_sync: 20_000,
            hyper_temperature: 0.25,
            epochs: 100,
            seed: 0,
            optimizer: OptimizerConfig::default(),
            network: NetworkConfig::default(),
            td_error_clip: false,
        }
    }
}

impl TrainingConfig {
    pub fn schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            initial: self.initial_exploration,
            final_value: self.final_exploration,
            annealing_steps: self.annealing_steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive_counts = [
            ("number_of_assets", self.num_assets as u64),
            ("window_size", self.window as u64),
            ("memory_size", self.memory_size as u64),
            ("minibatch_size", self.minibatch as u64),
            ("update_frequency", self.update_frequency),
            ("target_network_update_frequency", self.target_sync),
            ("epochs", self.epochs as u64),
        ];
        for (name, v) in positive_counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::Config("discount_factor must lie in (0, 1]".into()));
        }
        let eps_ok = |e: f64| (0.0..=1.0).contains(&e);
        if !eps_ok(self.initial_exploration) || !eps_ok(self.final_exploration) {
            return Err(Error::Config("exploration values must lie in [0, 1]".into()));
        }
        if self.final_exploration > self.initial_exploration {
            return Err(Error::Config(
                "final_exploration must not exceed initial_exploration".into(),
            ));
        }
        if !(self.hyper_temperature > 0.0 && self.hyper_temperature.is_finite()) {
            return Err(Error::Config("hyper_temperature must be positive".into()));
        }
        if self.network.hidden_units == 0 || self.network.conv_filters.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        self.optimizer.validate()
    }
}
