use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{mean, AbrEnv, EventSink, TrainConfig, TrainError, TrainEvent};
use crate::expert::beam_search;
use crate::mlp::{actor_forward, log_softmax, Activations, AdamState, Mlp};
use crate::sim::{Observation, Simulator};
use crate::trace::Trace;
use crate::video::VideoManifest;
use crate::N_LEVELS;

/// One labelled state: the expert's level and a dispreferred alternative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreferenceSample {
    pub obs: Observation,
    pub preferred: usize,
    pub rejected: usize,
}

/// A sample with the frozen reference log-probabilities attached.
#[derive(Debug, Clone, Copy)]
struct Scored {
    sample: PreferenceSample,
    ref_logp_w: f64,
    ref_logp_l: f64,
}

fn score(sample: PreferenceSample, reference: &Mlp) -> Scored {
    let lp = log_softmax(&reference.forward(sample.obs.as_slice()).out);
    Scored { sample, ref_logp_w: lp[sample.preferred], ref_logp_l: lp[sample.rejected] }
}

/// `softplus(x) = ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Step-wise preference loss
/// `-mean log sigmoid(beta * [(log pi(w|s) - log ref(w|s)) - (log pi(l|s) - log ref(l|s))])`
/// and its gradient with respect to `theta`. No gradient flows into `reference`.
pub fn dpo_step_loss(
    batch: &[PreferenceSample],
    theta: &Mlp,
    reference: &Mlp,
    beta: f64,
) -> Result<(f64, Vec<f64>), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    for s in batch {
        if s.preferred >= N_LEVELS || s.rejected >= N_LEVELS || s.preferred == s.rejected {
            return Err(TrainError::BadConfig(format!(
                "bad preference pair ({}, {})",
                s.preferred, s.rejected
            )));
        }
    }
    let scored: Vec<Scored> = batch.iter().map(|&s| score(s, reference)).collect();
    let refs: Vec<&Scored> = scored.iter().collect();
    Ok(loss_and_grad(&refs, theta, beta))
}

fn loss_and_grad(batch: &[&Scored], theta: &Mlp, beta: f64) -> (f64, Vec<f64>) {
    let n = batch.len() as f64;
    let mut grad = theta.zero_grad();
    let mut act = Activations::default();
    let mut dlogits = vec![0.0; N_LEVELS];
    let mut loss = 0.0;
    for s in batch {
        let x = s.sample.obs.as_slice();
        theta.forward_into(x, &mut act);
        let lp = log_softmax(&act.out);
        let (w, l) = (s.sample.preferred, s.sample.rejected);
        let z = beta * ((lp[w] - s.ref_logp_w) - (lp[l] - s.ref_logp_l));
        loss += softplus(-z);
        // d/dlogits of (log p_w - log p_l) is e_w - e_l; the softmax terms cancel.
        let coef = -sigmoid(-z) * beta / n;
        dlogits.fill(0.0);
        dlogits[w] = coef;
        dlogits[l] = -coef;
        theta.backward_accumulate(x, &act, &dlogits, &mut grad);
    }
    (loss / n, grad)
}

/// Draws an index from a probability vector with one uniform variate.
pub fn sample_categorical(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// DAgger-style pretraining with the step-wise preference loss.
///
/// Per iteration: roll out `rollout_steps` steps with actions sampled from the
/// current actor, label every visited state with the beam-search expert,
/// draw a uniformly random dispreferred level, append to the aggregated
/// buffer (never cleared), then run `epochs` shuffled passes over the whole
/// buffer. The reference policy is the initial actor, frozen throughout.
pub fn run_bc_pretraining(
    train_traces: &[Arc<Trace>],
    video: Arc<VideoManifest>,
    cfg: &TrainConfig,
    sink: EventSink<'_>,
) -> Result<Mlp, TrainError> {
    let dc = &cfg.dpo;
    dc.validate()?;
    let mut seeds = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init_seed: u64 = seeds.gen();
    let env_seed: u64 = seeds.gen();
    let mut action_rng = ChaCha8Rng::seed_from_u64(seeds.gen());
    let mut pref_rng = ChaCha8Rng::seed_from_u64(seeds.gen());
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seeds.gen());

    let mut actor = Mlp::actor(init_seed);
    let reference = actor.clone();
    let mut adam = AdamState::new(actor.params().len(), dc.lr);
    let mut env = AbrEnv::new(train_traces.to_vec(), video, cfg.sim.clone(), cfg.qoe, env_seed)?;
    let mut buffer: Vec<Scored> = Vec::with_capacity(dc.iterations * dc.rollout_steps);

    for iteration in 0..dc.iterations {
        let mut visited: Vec<(Observation, Simulator)> = Vec::with_capacity(dc.rollout_steps);
        let mut episode_rewards = Vec::new();
        for _ in 0..dc.rollout_steps {
            let obs = *env.observation();
            let (probs, _) = actor_forward(&actor, obs.as_slice())?;
            let action = sample_categorical(&probs, &mut action_rng);
            visited.push((obs, env.simulator().clone()));
            let step = env.step(action)?;
            episode_rewards.extend(step.episode_reward);
        }

        // The expert does not influence the trajectory, so labelling can run
        // after the rollout, in parallel, with results kept in visit order.
        let labels: Vec<usize> = visited
            .par_iter()
            .map(|(_, sim)| beam_search(sim, &cfg.expert, &cfg.qoe))
            .collect::<Result<_, _>>()?;

        for ((obs, _), preferred) in visited.into_iter().zip(labels) {
            let r = pref_rng.gen_range(0..N_LEVELS - 1);
            let rejected = if r >= preferred { r + 1 } else { r };
            buffer.push(score(PreferenceSample { obs, preferred, rejected }, &reference));
        }

        let mut losses = Vec::new();
        let mut order: Vec<usize> = (0..buffer.len()).collect();
        for _ in 0..dc.epochs {
            order.shuffle(&mut shuffle_rng);
            for idx in order.chunks(dc.minibatch) {
                let batch: Vec<&Scored> = idx.iter().map(|&i| &buffer[i]).collect();
                let (loss, grad) = loss_and_grad(&batch, &actor, dc.beta);
                adam.step(actor.params_mut(), &grad)?;
                losses.push(loss);
            }
        }

        sink(&TrainEvent::BcIteration {
            iteration: iteration + 1,
            buffer_len: buffer.len(),
            mean_loss: mean(&losses).unwrap_or(f64::NAN),
            mean_episode_reward: mean(&episode_rewards),
        });
        if cfg.checkpoint_every > 0 && (iteration + 1) % cfg.checkpoint_every == 0 {
            sink(&TrainEvent::Checkpoint { stage: "bc", iteration: iteration + 1, actor: &actor });
        }
    }
    Ok(actor)
}
