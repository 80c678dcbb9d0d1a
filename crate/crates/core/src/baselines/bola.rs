use serde::{Deserialize, Serialize};

use super::ControllerState;

/// BOLA-basic buffer targets, parameterized as in the dash.js reference
/// player: utilities are offset so the lowest level has utility 1, then
/// `gamma_p = (v_top - 1) / (Q_max / Q_min - 1)` and `V = Q_min / gamma_p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BolaConfig {
    pub min_buffer_s: f64,
    pub max_buffer_s: f64,
}

impl Default for BolaConfig {
    fn default() -> Self {
        BolaConfig { min_buffer_s: 10.0, max_buffer_s: 60.0 }
    }
}

impl BolaConfig {
    /// Returns `(V, gamma_p)` for a ladder, in buffer-chunk units.
    pub fn control_params(&self, ladder_kbps: &[u32], chunk_s: f64) -> (f64, f64) {
        let v_top = utility(ladder_kbps, ladder_kbps.len() - 1);
        let q_low = self.min_buffer_s / chunk_s;
        let q_high = self.max_buffer_s / chunk_s;
        let gamma_p = (v_top - 1.0) / (q_high / q_low - 1.0);
        (q_low / gamma_p, gamma_p)
    }
}

/// `ln(R_m / R_0) + 1`
fn utility(ladder_kbps: &[u32], level: usize) -> f64 {
    (ladder_kbps[level] as f64 / ladder_kbps[0] as f64).ln() + 1.0
}

/// Picks the level maximizing `(V * (v_m + gamma_p) - Q) / S_m` where `Q` is
/// the buffer in chunks and `S_m` the next chunk's size. Ties go up.
pub fn bola_select(state: &ControllerState, ladder_kbps: &[u32], cfg: &BolaConfig) -> usize {
    let (v, gamma_p) = cfg.control_params(ladder_kbps, state.chunk_duration_s);
    let q = state.buffer_s / state.chunk_duration_s;
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for m in 0..ladder_kbps.len() {
        let score = (v * (utility(ladder_kbps, m) + gamma_p) - q) / state.next_chunk_sizes[m] as f64;
        if score >= best_score {
            best_score = score;
            best = m;
        }
    }
    best
}
