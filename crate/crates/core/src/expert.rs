//! Beam-search oracle over the simulator's true future.
//!
//! Candidate level sequences are grown one chunk at a time by stepping clones
//! of the caller's simulator. After every depth only the `max_beams` highest
//! scoring prefixes survive. Scores are cumulative step rewards, so the first
//! step is charged a switch penalty against the snapshot's last level, exactly
//! like the training reward.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Result;
use crate::policy::AbrPolicy;
use crate::qoe::{step_reward, QoeConfig};
use crate::sim::{SimError, Simulator};

#[derive(Debug, Error)]
pub enum ExpertError {
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("invalid expert config: {0}")]
    BadConfig(String),
    #[error("simulator failed during lookahead: {0}")]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpertConfig {
    pub horizon: usize,
    pub max_beams: usize,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        ExpertConfig { horizon: 5, max_beams: 5000 }
    }
}

struct Beam {
    levels: Vec<u8>,
    score: f64,
    sim: Simulator,
}

/// Best-first ordering: higher score, then lexicographically smaller sequence.
fn beam_order(a: &Beam, b: &Beam) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.levels.cmp(&b.levels))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamResult {
    pub level: usize,
    pub best_score: f64,
    pub best_sequence: Vec<usize>,
}

/// Runs the search and returns the first level of the best final beam.
pub fn beam_search(sim: &Simulator, cfg: &ExpertConfig, qoe: &QoeConfig) -> Result<usize, ExpertError> {
    beam_search_detailed(sim, cfg, qoe).map(|r| r.level)
}

pub fn beam_search_detailed(
    sim: &Simulator,
    cfg: &ExpertConfig,
    qoe: &QoeConfig,
) -> Result<BeamResult, ExpertError> {
    if cfg.horizon == 0 || cfg.max_beams == 0 {
        return Err(ExpertError::BadConfig("horizon and max_beams must be positive".into()));
    }
    if sim.is_done() {
        return Err(ExpertError::EpisodeFinished);
    }
    let depth = cfg.horizon.min(sim.chunks_remaining());
    let ladder = sim.video().ladder_kbps().to_vec();
    let n_levels = ladder.len();

    let mut beams = vec![Beam { levels: Vec::new(), score: 0.0, sim: sim.clone() }];
    for d in 0..depth {
        let last_depth = d + 1 == depth;
        let mut next = Vec::with_capacity(beams.len() * n_levels);
        for beam in &beams {
            for level in 0..n_levels {
                let mut child = beam.sim.clone();
                let out = child.advance(level)?;
                let mut levels = Vec::with_capacity(depth);
                levels.extend_from_slice(&beam.levels);
                levels.push(level as u8);
                next.push(Beam {
                    levels,
                    score: beam.score + step_reward(&ladder, out.prev_level, level, out.rebuffer_s, qoe),
                    sim: child,
                });
            }
        }
        if last_depth {
            // Pruning the last depth cannot change the best beam.
            beams = next;
        } else {
            next.sort_by(beam_order);
            next.truncate(cfg.max_beams);
            beams = next;
        }
    }
    let best = beams.iter().min_by(|a, b| beam_order(a, b)).expect("at least one beam");
    Ok(BeamResult {
        level: best.levels[0] as usize,
        best_score: best.score,
        best_sequence: best.levels.iter().map(|&l| l as usize).collect(),
    })
}

/// The beam-search expert as an evaluable policy.
pub struct Oracle {
    pub cfg: ExpertConfig,
    pub qoe: QoeConfig,
}

impl AbrPolicy for Oracle {
    fn name(&self) -> &str {
        "oracle"
    }

    fn select(&mut self, sim: &Simulator) -> Result<usize> {
        Ok(beam_search(sim, &self.cfg, &self.qoe)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{SimConfig, StartPosition};
    use crate::trace::Trace;
    use crate::video::synth_video;
    use crate::LADDER_3G;
    use std::sync::Arc;

    fn sim_on(pairs: &[(f64, f64)]) -> Simulator {
        let trace = Arc::new(Trace::from_pairs("t", pairs).unwrap());
        let video = Arc::new(synth_video(&LADDER_3G, 49, 0.1, 2).unwrap());
        Simulator::reset(trace, video, SimConfig::default(), StartPosition::Deterministic).unwrap().0
    }

    /// Exhaustive recursion: best cumulative reward and its first level.
    fn exhaustive(sim: &Simulator, depth: usize, qoe: &QoeConfig) -> (usize, f64) {
        fn best(sim: &Simulator, depth: usize, qoe: &QoeConfig) -> f64 {
            if depth == 0 || sim.is_done() {
                return 0.0;
            }
            (0..6)
                .map(|l| {
                    let mut s = sim.clone();
                    let o = s.advance(l).unwrap();
                    step_reward(&LADDER_3G, o.prev_level, l, o.rebuffer_s, qoe) + best(&s, depth - 1, qoe)
                })
                .fold(f64::NEG_INFINITY, f64::max)
        }
        let mut out = (0, f64::NEG_INFINITY);
        for l in 0..6 {
            let mut s = sim.clone();
            let o = s.advance(l).unwrap();
            let v = step_reward(&LADDER_3G, o.prev_level, l, o.rebuffer_s, qoe) + best(&s, depth - 1, qoe);
            if v > out.1 {
                out = (l, v);
            }
        }
        out
    }

    #[test]
    fn horizon_one_is_greedy() {
        let sim = sim_on(&[(0.0, 1.5), (3.0, 0.4), (9.0, 2.0)]);
        let qoe = QoeConfig::new(4.3);
        let cfg = ExpertConfig { horizon: 1, max_beams: 5000 };
        assert_eq!(beam_search(&sim, &cfg, &qoe).unwrap(), exhaustive(&sim, 1, &qoe).0);
    }

    #[test]
    fn unpruned_equals_exhaustive() {
        let mut sim = sim_on(&[(0.0, 1.5), (3.0, 0.4), (9.0, 2.0), (10.0, 0.8), (16.0, 3.5)]);
        let qoe = QoeConfig::new(4.3);
        for step in 0..8 {
            for depth in 1..=3 {
                let cfg = ExpertConfig { horizon: depth, max_beams: 6usize.pow(depth as u32) };
                let r = beam_search_detailed(&sim, &cfg, &qoe).unwrap();
                let (l, v) = exhaustive(&sim, depth, &qoe);
                assert_eq!(r.level, l);
                assert!((r.best_score - v).abs() < 1e-9);
            }
            sim.advance(step % 6).unwrap();
        }
    }

    #[test]
    fn huge_bandwidth_with_deep_buffer_goes_top() {
        let mut sim = sim_on(&[(0.0, 500.0), (100.0, 500.0)]);
        for _ in 0..10 {
            sim.advance(5).unwrap();
        }
        let qoe = QoeConfig::new(4.3);
        assert_eq!(beam_search(&sim, &ExpertConfig::default(), &qoe).unwrap(), 5);
    }

    #[test]
    fn caller_state_untouched_and_finished_rejected() {
        let mut sim = sim_on(&[(0.0, 2.0), (5.0, 1.0)]);
        let before = sim.snapshot();
        beam_search(&sim, &ExpertConfig::default(), &QoeConfig::new(4.3)).unwrap();
        assert_eq!(sim.snapshot(), before);
        for _ in 0..49 {
            sim.advance(0).unwrap();
        }
        assert!(matches!(
            beam_search(&sim, &ExpertConfig::default(), &QoeConfig::new(4.3)),
            Err(ExpertError::EpisodeFinished)
        ));
    }

    #[test]
    fn more_beams_never_hurt() {
        let sim = sim_on(&[(0.0, 1.2), (2.0, 0.3), (5.0, 2.4), (7.0, 0.9)]);
        let qoe = QoeConfig::new(4.3);
        let mut prev = f64::NEG_INFINITY;
        for k in [1, 2, 5, 20, 100, 1000, 5000] {
            let r = beam_search_detailed(&sim, &ExpertConfig { horizon: 5, max_beams: k }, &qoe).unwrap();
            assert!(r.best_score >= prev - 1e-12);
            prev = r.best_score;
        }
    }
}
