use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::policy::{compute_target, select_action};
use super::replay::{Experience, ReplayBuffer};
use super::TrainingConfig;
use crate::environment::{Diagnostics, EnvConfig, EquityRow, MarketEnv, TradeAction};
use crate::error::{Error, Result};
use crate::preprocessing::BlockStream;
use crate::qnet::{Gradients, Optimizer, QNetSpec, QNetwork};

/// Offsets the behavior RNG from the initialization RNG.
const BEHAVIOR_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLogRow {
    pub step: u64,
    pub epsilon: f64,
    /// Mean minibatch loss when an update ran at this step.
    pub loss: Option<f64>,
    pub reward: f64,
    pub total_value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<TrainingLogRow>,
}

impl TrainingLog {
    pub fn losses(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.loss).collect()
    }
}

pub fn write_training_log<W: Write>(log: &TrainingLog, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    for row in &log.rows {
        wtr.serialize(row).map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Online/target networks, optimizer, replay memory and RNG of one agent.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainingConfig,
    env_config: EnvConfig,
    online: QNetwork,
    target: QNetwork,
    optimizer: Optimizer,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    steps: u64,
    updates: u64,
}

impl Trainer {
    pub fn new(config: TrainingConfig, env_config: EnvConfig, spec: QNetSpec) -> Result<Self> {
        let online = QNetwork::new(spec, config.seed)?;
        Self::from_network(config, env_config, online)
    }

    pub fn from_network(config: TrainingConfig, env_config: EnvConfig, online: QNetwork) -> Result<Self> {
        config.validate()?;
        env_config.validate()?;
        let optimizer = Optimizer::new(config.optimizer, &online.param_shapes());
        Ok(Self {
            target: online.sync_target(),
            buffer: ReplayBuffer::new(config.memory_size)?,
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ BEHAVIOR_STREAM),
            online,
            optimizer,
            env_config,
            config,
            steps: 0,
            updates: 0,
        })
    }

    pub fn online(&self) -> &QNetwork {
        &self.online
    }

    pub fn target(&self) -> &QNetwork {
        &self.target
    }

    pub fn optimizer(&self) -> &Optimizer {
        &self.optimizer
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    pub fn env_config(&self) -> &EnvConfig {
        &self.env_config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn into_network(self) -> QNetwork {
        self.online
    }

    fn check_stream(&self, stream: &BlockStream) -> Result<()> {
        let spec = self.online.spec();
        if stream.window() != spec.window || stream.num_assets() != spec.assets {
            return Err(Error::Argument(format!(
                "stream has window {} and {} assets, network expects {} and {}",
                stream.window(),
                stream.num_assets(),
                spec.window,
                spec.assets
            )));
        }
        if stream.len() < 2 {
            return Err(Error::Argument(
                "training needs at least two blocks (period longer than the window)".into(),
            ));
        }
        Ok(())
    }

    /// Runs `config.epochs` episodes over the stream.
    pub fn train(&mut self, stream: &BlockStream) -> Result<TrainingLog> {
        let mut log = TrainingLog::default();
        for _ in 0..self.config.epochs {
            self.run_epoch(stream, &mut log)?;
        }
        Ok(log)
    }

    /// One episode: act epsilon-greedily, store transitions, and update the
    /// online network every `update_frequency` steps once the buffer holds
    /// `update_start` experiences.
    pub fn run_epoch(&mut self, stream: &BlockStream, log: &mut TrainingLog) -> Result<()> {
        self.check_stream(stream)?;
        let schedule = self.config.schedule();
        let mut env = MarketEnv::new(stream, self.env_config)?;
        let (mut state, _) = env.reset();
        while !env.is_done() {
            let epsilon = schedule.value(self.steps);
            let q = self.online.forward(&*stream.block(state)?)?;
            let choice = select_action(&q, epsilon, &mut self.rng)?;
            let action = TradeAction::from_id(choice.action_id, stream.num_assets(), choice.sigma)?;
            let result = env.step(&action)?;
            self.buffer.push(Experience {
                state_index: state,
                action_id: choice.action_id,
                reward: result.reward,
                next_state_index: result.next_state_index,
                done: result.done,
            });
            self.steps += 1;

            let loss = if self.buffer.len() >= self.config.update_start
                && self.steps % self.config.update_frequency == 0
            {
                Some(self.update(stream)?)
            } else {
                None
            };
            if self.steps % self.config.target_sync == 0 {
                self.target = self.online.sync_target();
            }
            log.rows.push(TrainingLogRow {
                step: self.steps,
                epsilon,
                loss,
                reward: result.reward,
                total_value: result.total_value_after,
            });
            state = result.next_state_index;
        }
        Ok(())
    }

    /// One minibatch gradient step; returns the mean loss.
    fn update(&mut self, stream: &BlockStream) -> Result<f64> {
        let batch = self.buffer.sample(self.config.minibatch, &mut self.rng)?;
        let (online, target, cfg) = (&self.online, &self.target, &self.config);
        let per_sample: Vec<Result<(Gradients, f64)>> = batch
            .par_iter()
            .map(|e| {
                let q_next = if e.done {
                    Vec::new()
                } else {
                    target.forward(&*stream.block(e.next_state_index)?)?
                };
                let y = compute_target(e.reward, &q_next, e.done, cfg.discount, cfg.hyper_temperature)?;
                let pass = online.forward_cached(&*stream.block(e.state_index)?)?;
                let mut td = y - pass.q_values()[e.action_id];
                let loss = 0.5 * td * td;
                if cfg.td_error_clip {
                    td = td.clamp(-1.0, 1.0);
                }
                Ok((online.backward(&pass, e.action_id, td)?, loss))
            })
            .collect();

        let scale = 1.0 / batch.len() as f64;
        let mut grads = Gradients::zeros(&self.online.param_shapes());
        let mut loss = 0.0;
        for item in per_sample {
            let (g, l) = item?;
            grads.add_scaled(&g, scale);
            loss += l * scale;
        }
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss at step {} (update {})",
                self.steps, self.updates
            )));
        }
        self.online.apply_gradients(&mut self.optimizer, &grads)?;
        self.updates += 1;
        Ok(loss)
    }
}

/// Trains a fresh network and returns it with the per-step log.
pub fn train(
    stream: &BlockStream,
    env_config: EnvConfig,
    config: &TrainingConfig,
) -> Result<(QNetwork, TrainingLog)> {
    let spec = config.network.spec(stream.window(), stream.num_assets())?;
    let mut trainer = Trainer::new(config.clone(), env_config, spec)?;
    let log = trainer.train(stream)?;
    Ok((trainer.into_network(), log))
}

/// Result of a learning-free rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRun {
    /// The initial state at step 0, then one row per action.
    pub rows: Vec<EquityRow>,
    /// Total value at reset followed by the value after every step.
    pub curve: Vec<f64>,
    pub timestamps: Vec<i64>,
    pub diagnostics: Diagnostics,
}

/// Rolls the policy over the stream without learning. With `epsilon = 0`
/// the rollout is fully deterministic and `seed` is unused.
pub fn run_policy(
    net: &QNetwork,
    stream: &BlockStream,
    env_config: EnvConfig,
    epsilon: f64,
    seed: u64,
) -> Result<PolicyRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ BEHAVIOR_STREAM);
    let mut env = MarketEnv::new(stream, env_config)?;
    let (mut state, _) = env.reset();
    let mut curve = vec![env.total_value()];
    let mut timestamps = vec![stream.timestamp(state)];
    let mut rows = Vec::with_capacity(stream.len());
    rows.push(EquityRow {
        step: 0,
        timestamp: stream.timestamp(state),
        action_id: None,
        sigma: None,
        reward: 0.0,
        total_value: env.total_value(),
    });
    while !env.is_done() {
        let q = net.forward(&*stream.block(state)?)?;
        let choice = select_action(&q, epsilon, &mut rng)?;
        let action = TradeAction::from_id(choice.action_id, stream.num_assets(), choice.sigma)?;
        let result = env.step(&action)?;
        state = result.next_state_index;
        rows.push(EquityRow {
            step: rows.len(),
            timestamp: stream.timestamp(state),
            action_id: Some(choice.action_id),
            sigma: Some(choice.sigma),
            reward: result.reward,
            total_value: result.total_value_after,
        });
        curve.push(result.total_value_after);
        timestamps.push(stream.timestamp(state));
    }
    Ok(PolicyRun {
        rows,
        curve,
        timestamps,
        diagnostics: env.diagnostics(),
    })
}
