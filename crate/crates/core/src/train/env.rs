use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TrainError;
use crate::qoe::{step_reward, QoeConfig};
use crate::sim::{Observation, SimConfig, Simulator, StartPosition, StepOutcome};
use crate::trace::Trace;
use crate::video::VideoManifest;

/// Auto-resetting training environment over a pool of traces.
///
/// Each episode picks a trace uniformly at random and starts at a seeded
/// random offset. Rewards are [`step_reward`] values.
#[derive(Debug, Clone)]
pub struct AbrEnv {
    traces: Vec<Arc<Trace>>,
    video: Arc<VideoManifest>,
    cfg: SimConfig,
    qoe: QoeConfig,
    rng: ChaCha8Rng,
    sim: Simulator,
    obs: Observation,
    episode_reward: f64,
}

pub struct EnvStep {
    pub reward: f64,
    pub done: bool,
    /// Observation reached by this step (terminal if `done`).
    pub next_obs: Observation,
    pub outcome: StepOutcome,
    /// Set when the step finished an episode.
    pub episode_reward: Option<f64>,
}

impl AbrEnv {
    pub fn new(
        traces: Vec<Arc<Trace>>,
        video: Arc<VideoManifest>,
        cfg: SimConfig,
        qoe: QoeConfig,
        seed: u64,
    ) -> Result<Self, TrainError> {
        if traces.is_empty() {
            return Err(TrainError::NoTraces);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (sim, obs) = Self::fresh(&traces, &video, &cfg, &mut rng)?;
        Ok(AbrEnv { traces, video, cfg, qoe, rng, sim, obs, episode_reward: 0.0 })
    }

    fn fresh(
        traces: &[Arc<Trace>],
        video: &Arc<VideoManifest>,
        cfg: &SimConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Simulator, Observation), TrainError> {
        let trace = traces[rng.gen_range(0..traces.len())].clone();
        let start = StartPosition::RandomOffset(rng.gen());
        Ok(Simulator::reset(trace, video.clone(), cfg.clone(), start)?)
    }

    pub fn observation(&self) -> &Observation {
        &self.obs
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn step(&mut self, action: usize) -> Result<EnvStep, TrainError> {
        let (next_obs, outcome) = self.sim.step(action)?;
        let reward = step_reward(self.video.ladder_kbps(), outcome.prev_level, action, outcome.rebuffer_s, &self.qoe);
        self.episode_reward += reward;
        let mut episode_reward = None;
        if outcome.done {
            episode_reward = Some(self.episode_reward);
            self.episode_reward = 0.0;
            let (sim, obs) = Self::fresh(&self.traces, &self.video, &self.cfg, &mut self.rng)?;
            self.sim = sim;
            self.obs = obs;
        } else {
            self.obs = next_obs;
        }
        Ok(EnvStep { reward, done: outcome.done, next_obs, outcome, episode_reward })
    }
}
