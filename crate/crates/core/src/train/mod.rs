//! Two-stage policy training.
//!
//! Stage one ([`run_bc_pretraining`]) is DAgger-style imitation of the beam
//! search expert, optimized with a step-wise preference loss against a frozen
//! copy of the initial actor. Stage two ([`run_rl_finetune`]) is PPO with GAE,
//! starting from the stage-one actor and a fresh critic.
//!
//! Both stages are bit-reproducible for a fixed seed: all randomness is drawn
//! from seeded ChaCha streams and every reduction runs in a fixed order.

mod dpo;
mod env;
mod gae;
mod ppo;

pub use dpo::{dpo_step_loss, run_bc_pretraining, sample_categorical, PreferenceSample};
pub use env::AbrEnv;
pub use gae::compute_gae;
pub use ppo::{ppo_loss, run_rl_finetune, FineTuned, PpoLoss, PpoSample, RolloutBatch, Transition};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expert::{ExpertConfig, ExpertError};
use crate::mlp::{Mlp, MlpError};
use crate::qoe::QoeConfig;
use crate::sim::{SimConfig, SimError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("no training traces")]
    NoTraces,
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("expert failed: {0}")]
    ExpertFailure(#[from] ExpertError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
}

/// Preference-pretraining hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpoConfig {
    pub beta: f64,
    pub iterations: usize,
    /// Full passes over the aggregated buffer per iteration.
    pub epochs: usize,
    pub rollout_steps: usize,
    pub minibatch: usize,
    pub lr: f64,
}

impl Default for DpoConfig {
    fn default() -> Self {
        DpoConfig { beta: 0.1, iterations: 15, epochs: 5, rollout_steps: 2000, minibatch: 128, lr: 3e-4 }
    }
}

impl DpoConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let ok = self.beta >= 0.0
            && self.iterations > 0
            && self.epochs > 0
            && self.rollout_steps > 0
            && self.minibatch > 0
            && self.lr > 0.0;
        ok.then_some(()).ok_or_else(|| TrainError::BadConfig(format!("{self:?}")))
    }
}

/// PPO fine-tuning hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub iterations: usize,
    pub epochs: usize,
    /// Steps collected per environment per iteration.
    pub rollout_steps: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub clip: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub c1: f64,
    pub c2: f64,
    pub n_envs: usize,
    pub normalize_advantage: bool,
    /// Joint L2 clip over actor and critic gradients; `None` disables it.
    pub max_grad_norm: Option<f64>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            iterations: 244,
            epochs: 10,
            rollout_steps: 512,
            minibatch: 64,
            lr: 3e-4,
            clip: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            c1: 0.5,
            c2: 0.0,
            n_envs: 4,
            normalize_advantage: true,
            max_grad_norm: Some(0.5),
        }
    }
}

impl PpoConfig {
    pub fn total_env_steps(&self) -> usize {
        self.iterations * self.rollout_steps * self.n_envs
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let ok = self.iterations > 0
            && self.epochs > 0
            && self.rollout_steps > 0
            && self.minibatch > 0
            && self.n_envs > 0
            && self.lr > 0.0
            && self.clip > 0.0
            && self.clip < 1.0
            && (0.0..=1.0).contains(&self.gamma)
            && (0.0..=1.0).contains(&self.lambda)
            && self.c1 >= 0.0
            && self.c2 >= 0.0;
        ok.then_some(()).ok_or_else(|| TrainError::BadConfig(format!("{self:?}")))
    }
}

/// Everything a training run needs besides data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub dpo: DpoConfig,
    pub ppo: PpoConfig,
    pub expert: ExpertConfig,
    pub sim: SimConfig,
    pub qoe: QoeConfig,
    /// Emit a checkpoint event every this many iterations (0 = never).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            dpo: DpoConfig::default(),
            ppo: PpoConfig::default(),
            expert: ExpertConfig::default(),
            sim: SimConfig::default(),
            qoe: QoeConfig::new(4.3),
            checkpoint_every: 0,
        }
    }
}

/// Progress notifications from the trainers.
#[derive(Debug)]
pub enum TrainEvent<'a> {
    BcIteration {
        iteration: usize,
        buffer_len: usize,
        mean_loss: f64,
        mean_episode_reward: Option<f64>,
    },
    PpoIteration {
        iteration: usize,
        /// Buffer size when collection started; always zero.
        buffer_len_at_start: usize,
        transitions: usize,
        mean_episode_reward: Option<f64>,
        actor_loss: f64,
        value_loss: f64,
        entropy: f64,
        /// Largest `|ratio - 1|` on the first minibatch, before any update.
        first_minibatch_max_ratio_dev: f64,
    },
    Checkpoint {
        stage: &'static str,
        iteration: usize,
        actor: &'a Mlp,
    },
}

/// Sink for [`TrainEvent`]s.
pub type EventSink<'s> = &'s mut dyn FnMut(&TrainEvent<'_>);

pub(crate) fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}
