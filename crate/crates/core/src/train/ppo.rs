use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::dpo::sample_categorical;
use super::{compute_gae, mean, AbrEnv, EventSink, PpoConfig, TrainConfig, TrainError, TrainEvent};
use crate::mlp::{actor_forward, critic_forward, log_softmax, softmax, Activations, AdamState, Mlp};
use crate::sim::Observation;
use crate::trace::Trace;
use crate::video::VideoManifest;
use crate::N_LEVELS;

/// One environment step as seen by the learner.
#[derive(Debug, Clone, Copy)]
pub struct Transition {
    pub obs: Observation,
    pub action: usize,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
    /// Critic value of the reached state; zero when `done`.
    pub next_value: f64,
}

/// Transitions from all environments with their advantages and value targets.
#[derive(Debug, Clone, Default)]
pub struct RolloutBatch {
    pub transitions: Vec<Transition>,
    pub advantages: Vec<f64>,
    pub targets: Vec<f64>,
}

impl RolloutBatch {
    /// Runs GAE on each environment's sequence separately and concatenates
    /// the results in environment order.
    pub fn from_env_rollouts(rollouts: Vec<Vec<Transition>>, gamma: f64, lambda: f64) -> Result<Self, TrainError> {
        let mut batch = RolloutBatch::default();
        for seq in rollouts {
            let rewards: Vec<f64> = seq.iter().map(|t| t.reward).collect();
            let values: Vec<f64> = seq.iter().map(|t| t.value).collect();
            let next: Vec<f64> = seq.iter().map(|t| t.next_value).collect();
            let dones: Vec<bool> = seq.iter().map(|t| t.done).collect();
            let (adv, targets) = compute_gae(&rewards, &values, &next, &dones, gamma, lambda)?;
            batch.transitions.extend(seq);
            batch.advantages.extend(adv);
            batch.targets.extend(targets);
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn sample(&self, i: usize) -> PpoSample {
        let t = &self.transitions[i];
        PpoSample {
            obs: t.obs,
            action: t.action,
            old_log_prob: t.log_prob,
            advantage: self.advantages[i],
            target: self.targets[i],
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PpoSample {
    pub obs: Observation,
    pub action: usize,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub target: f64,
}

/// Minibatch objective and gradients.
#[derive(Debug, Clone)]
pub struct PpoLoss {
    /// `actor_loss + c1 * value_loss - c2 * entropy`.
    pub loss: f64,
    /// Negated clipped surrogate.
    pub actor_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_actor: Vec<f64>,
    pub grad_critic: Vec<f64>,
    /// Largest `|ratio - 1|` in the minibatch.
    pub max_ratio_dev: f64,
}

/// Clipped-surrogate PPO loss with MSE critic and entropy bonus.
///
/// Advantages are standardized within the minibatch when
/// `cfg.normalize_advantage` is set and there is more than one sample.
/// Gradients are not norm-clipped here.
pub fn ppo_loss(samples: &[PpoSample], actor: &Mlp, critic: &Mlp, cfg: &PpoConfig) -> Result<PpoLoss, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    if let Some(s) = samples.iter().find(|s| s.action >= N_LEVELS) {
        return Err(TrainError::BadConfig(format!("action {} out of range", s.action)));
    }
    let n = samples.len() as f64;
    let mut adv: Vec<f64> = samples.iter().map(|s| s.advantage).collect();
    if cfg.normalize_advantage && samples.len() > 1 {
        let m = adv.iter().sum::<f64>() / n;
        let var = adv.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        adv.iter_mut().for_each(|a| *a = (*a - m) / (sd + 1e-8));
    }

    let mut grad_actor = actor.zero_grad();
    let mut grad_critic = critic.zero_grad();
    let mut act = Activations::default();
    let mut cact = Activations::default();
    let mut dlogits = vec![0.0; N_LEVELS];
    let (mut surr_sum, mut value_sum, mut ent_sum, mut max_dev) = (0.0, 0.0, 0.0, 0.0f64);

    for (s, &a_hat) in samples.iter().zip(&adv) {
        let x = s.obs.as_slice();
        actor.forward_into(x, &mut act);
        let lp = log_softmax(&act.out);
        let p = softmax(&act.out);
        let ratio = (lp[s.action] - s.old_log_prob).exp();
        max_dev = max_dev.max((ratio - 1.0).abs());
        let surr1 = ratio * a_hat;
        let surr2 = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * a_hat;
        surr_sum += surr1.min(surr2);
        let entropy = -p.iter().zip(&lp).map(|(pi, li)| pi * li).sum::<f64>();
        ent_sum += entropy;

        // When the clipped branch is the minimum the ratio is outside the
        // trust region and that branch is constant in theta.
        let g_logp = if surr1 <= surr2 { -ratio * a_hat / n } else { 0.0 };
        for j in 0..N_LEVELS {
            let onehot = if j == s.action { 1.0 } else { 0.0 };
            dlogits[j] = g_logp * (onehot - p[j]) + cfg.c2 / n * p[j] * (lp[j] + entropy);
        }
        actor.backward_accumulate(x, &act, &dlogits, &mut grad_actor);

        critic.forward_into(x, &mut cact);
        let err = cact.out[0] - s.target;
        value_sum += err * err;
        critic.backward_accumulate(x, &cact, &[cfg.c1 * 2.0 * err / n], &mut grad_critic);
    }

    let actor_loss = -surr_sum / n;
    let value_loss = value_sum / n;
    let entropy = ent_sum / n;
    Ok(PpoLoss {
        loss: actor_loss + cfg.c1 * value_loss - cfg.c2 * entropy,
        actor_loss,
        value_loss,
        entropy,
        grad_actor,
        grad_critic,
        max_ratio_dev: max_dev,
    })
}

/// Scales both gradients so their joint L2 norm is at most `max_norm`.
fn clip_joint_norm(a: &mut [f64], b: &mut [f64], max_norm: f64) {
    let norm = a.iter().chain(b.iter()).map(|g| g * g).sum::<f64>().sqrt();
    let coef = max_norm / (norm + 1e-6);
    if coef < 1.0 {
        a.iter_mut().chain(b.iter_mut()).for_each(|g| *g *= coef);
    }
}

/// Stage-two output.
#[derive(Debug, Clone)]
pub struct FineTuned {
    pub actor: Mlp,
    pub critic: Mlp,
}

fn collect(
    env: &mut AbrEnv,
    rng: &mut ChaCha8Rng,
    actor: &Mlp,
    critic: &Mlp,
    steps: usize,
) -> Result<(Vec<Transition>, Vec<f64>), TrainError> {
    let mut out = Vec::with_capacity(steps);
    let mut finished = Vec::new();
    for _ in 0..steps {
        let obs = *env.observation();
        let (probs, logits) = actor_forward(actor, obs.as_slice())?;
        let action = sample_categorical(&probs, rng);
        let log_prob = log_softmax(&logits)[action];
        let value = critic_forward(critic, obs.as_slice())?;
        let step = env.step(action)?;
        let next_value = if step.done { 0.0 } else { critic_forward(critic, step.next_obs.as_slice())? };
        finished.extend(step.episode_reward);
        out.push(Transition { obs, action, log_prob, value, reward: step.reward, done: step.done, next_value });
    }
    Ok((out, finished))
}

/// PPO fine-tuning from a pretrained actor and a freshly initialized critic.
///
/// Each iteration collects `rollout_steps` from each of `n_envs`
/// environments with the current policy, computes GAE per environment, then
/// runs `epochs` shuffled passes of minibatch updates. The rollout buffer is
/// discarded after every iteration.
pub fn run_rl_finetune(
    base: &Mlp,
    train_traces: &[Arc<Trace>],
    video: Arc<VideoManifest>,
    cfg: &TrainConfig,
    sink: EventSink<'_>,
) -> Result<FineTuned, TrainError> {
    let pc = &cfg.ppo;
    pc.validate()?;
    let mut seeds = ChaCha8Rng::seed_from_u64(cfg.seed);
    seeds.set_stream(1);
    let mut critic = Mlp::critic(seeds.gen());
    let mut actor = base.clone();
    let mut envs = Vec::with_capacity(pc.n_envs);
    let mut rngs = Vec::with_capacity(pc.n_envs);
    for _ in 0..pc.n_envs {
        envs.push(AbrEnv::new(train_traces.to_vec(), video.clone(), cfg.sim.clone(), cfg.qoe, seeds.gen())?);
        rngs.push(ChaCha8Rng::seed_from_u64(seeds.gen()));
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seeds.gen());
    let mut actor_opt = AdamState::new(actor.params().len(), pc.lr);
    let mut critic_opt = AdamState::new(critic.params().len(), pc.lr);

    for iteration in 0..pc.iterations {
        let collected: Vec<(Vec<Transition>, Vec<f64>)> = envs
            .par_iter_mut()
            .zip(rngs.par_iter_mut())
            .map(|(env, rng)| collect(env, rng, &actor, &critic, pc.rollout_steps))
            .collect::<Result<_, _>>()?;
        let mut rollouts = Vec::with_capacity(collected.len());
        let mut episode_rewards = Vec::new();
        for (seq, finished) in collected {
            rollouts.push(seq);
            episode_rewards.extend(finished);
        }
        let batch = RolloutBatch::from_env_rollouts(rollouts, pc.gamma, pc.lambda)?;

        let (mut al, mut vl, mut ent) = (Vec::new(), Vec::new(), Vec::new());
        let mut first_dev = None;
        let mut order: Vec<usize> = (0..batch.len()).collect();
        for _ in 0..pc.epochs {
            order.shuffle(&mut shuffle_rng);
            for idx in order.chunks(pc.minibatch) {
                let samples: Vec<PpoSample> = idx.iter().map(|&i| batch.sample(i)).collect();
                let mut out = ppo_loss(&samples, &actor, &critic, pc)?;
                first_dev.get_or_insert(out.max_ratio_dev);
                if let Some(max) = pc.max_grad_norm {
                    clip_joint_norm(&mut out.grad_actor, &mut out.grad_critic, max);
                }
                actor_opt.step(actor.params_mut(), &out.grad_actor)?;
                critic_opt.step(critic.params_mut(), &out.grad_critic)?;
                al.push(out.actor_loss);
                vl.push(out.value_loss);
                ent.push(out.entropy);
            }
        }

        sink(&TrainEvent::PpoIteration {
            iteration: iteration + 1,
            buffer_len_at_start: 0,
            transitions: batch.len(),
            mean_episode_reward: mean(&episode_rewards),
            actor_loss: mean(&al).unwrap_or(f64::NAN),
            value_loss: mean(&vl).unwrap_or(f64::NAN),
            entropy: mean(&ent).unwrap_or(f64::NAN),
            first_minibatch_max_ratio_dev: first_dev.unwrap_or(0.0),
        });
        if cfg.checkpoint_every > 0 && (iteration + 1) % cfg.checkpoint_every == 0 {
            sink(&TrainEvent::Checkpoint { stage: "rl", iteration: iteration + 1, actor: &actor });
        }
    }
    Ok(FineTuned { actor, critic })
}
