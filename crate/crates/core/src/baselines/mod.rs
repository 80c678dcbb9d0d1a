//! Rule-based ABR controllers: buffer-based (BB), BOLA, RobustMPC and QUETRA.
//!
//! Each selector is a deterministic function of a [`ControllerState`], the
//! client-side observables of the simulator. RobustMPC additionally carries its
//! own prediction-error history across an episode; that lives in the
//! [`RobustMpc`] wrapper so the selector itself stays pure.

mod bb;
mod bola;
mod mpc;
mod quetra;

pub use bb::{bb_select, BbConfig};
pub use bola::{bola_select, BolaConfig};
pub use mpc::{harmonic_mean, robust_mpc_select, MpcConfig, MpcDecision};
pub use quetra::{md1k_mean_occupancy, quetra_select, QuetraConfig};

use thiserror::Error;

use crate::error::Result;
use crate::policy::AbrPolicy;
use crate::qoe::QoeConfig;
use crate::sim::Simulator;

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("unknown controller {0:?} (expected bb, bola, robustmpc, quetra)")]
    Unknown(String),
}

/// Client-observable playback state shared by all controllers.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub buffer_s: f64,
    /// Oldest first, at most 8 entries, only real measurements.
    pub throughputs_mbps: Vec<f64>,
    pub download_times_s: Vec<f64>,
    pub last_level: usize,
    pub next_chunk_sizes: Vec<u64>,
    pub next_chunk: usize,
    pub chunks_remaining: usize,
    pub chunk_duration_s: f64,
}

impl ControllerState {
    pub fn from_sim(sim: &Simulator) -> Self {
        let video = sim.video();
        let st = sim.state();
        let next_chunk_sizes = if sim.is_done() {
            vec![0; video.n_levels()]
        } else {
            (0..video.n_levels()).map(|l| video.chunk_size(l, st.next_chunk())).collect()
        };
        ControllerState {
            buffer_s: st.buffer_s(),
            throughputs_mbps: sim.throughput_history().to_vec(),
            download_times_s: sim.download_time_history().to_vec(),
            last_level: st.last_level(),
            next_chunk_sizes,
            next_chunk: st.next_chunk(),
            chunks_remaining: sim.chunks_remaining(),
            chunk_duration_s: video.chunk_duration_s(),
        }
    }
}

/// Harmonic mean of the last `window` samples, or the lowest ladder rate when
/// there is no history yet.
pub(crate) fn throughput_estimate(state: &ControllerState, ladder_kbps: &[u32], window: usize) -> f64 {
    let n = state.throughputs_mbps.len();
    if n == 0 {
        return ladder_kbps[0] as f64 / 1000.0;
    }
    harmonic_mean(&state.throughputs_mbps[n.saturating_sub(window)..])
}

pub struct Bb {
    pub cfg: BbConfig,
}

impl AbrPolicy for Bb {
    fn name(&self) -> &str {
        "bb"
    }

    fn select(&mut self, sim: &Simulator) -> Result<usize> {
        Ok(bb_select(&ControllerState::from_sim(sim), sim.video().ladder_kbps(), &self.cfg))
    }
}

pub struct Bola {
    pub cfg: BolaConfig,
}

impl AbrPolicy for Bola {
    fn name(&self) -> &str {
        "bola"
    }

    fn select(&mut self, sim: &Simulator) -> Result<usize> {
        Ok(bola_select(&ControllerState::from_sim(sim), sim.video().ladder_kbps(), &self.cfg))
    }
}

/// RobustMPC with its per-episode prediction-error bookkeeping.
pub struct RobustMpc {
    pub cfg: MpcConfig,
    past_estimates: Vec<f64>,
    past_errors: Vec<f64>,
}

impl RobustMpc {
    pub fn new(cfg: MpcConfig) -> Self {
        RobustMpc { cfg, past_estimates: Vec::new(), past_errors: Vec::new() }
    }
}

impl AbrPolicy for RobustMpc {
    fn name(&self) -> &str {
        "robustmpc"
    }

    fn reset(&mut self) {
        self.past_estimates.clear();
        self.past_errors.clear();
    }

    fn select(&mut self, sim: &Simulator) -> Result<usize> {
        let state = ControllerState::from_sim(sim);
        let error = match (self.past_estimates.last(), state.throughputs_mbps.last()) {
            (Some(&est), Some(&actual)) => (est - actual).abs() / actual,
            _ => 0.0,
        };
        self.past_errors.push(error);
        let d = robust_mpc_select(&state, sim.video(), &self.cfg, &self.past_errors);
        self.past_estimates.push(d.raw_estimate_mbps);
        Ok(d.level)
    }
}

pub struct Quetra {
    pub cfg: QuetraConfig,
}

impl AbrPolicy for Quetra {
    fn name(&self) -> &str {
        "quetra"
    }

    fn select(&mut self, sim: &Simulator) -> Result<usize> {
        Ok(quetra_select(&ControllerState::from_sim(sim), sim.video().ladder_kbps(), &self.cfg))
    }
}

/// Builds a controller by its CLI name.
pub fn controller_by_name(name: &str, qoe: QoeConfig) -> Result<Box<dyn AbrPolicy>, ControllerError> {
    Ok(match name {
        "bb" => Box::new(Bb { cfg: BbConfig::default() }),
        "bola" => Box::new(Bola { cfg: BolaConfig::default() }),
        "robustmpc" => Box::new(RobustMpc::new(MpcConfig { qoe, ..MpcConfig::default() })),
        "quetra" => Box::new(Quetra { cfg: QuetraConfig::default() }),
        other => return Err(ControllerError::Unknown(other.to_string())),
    })
}
