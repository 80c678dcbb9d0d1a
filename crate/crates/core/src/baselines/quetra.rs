use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{throughput_estimate, ControllerState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuetraConfig {
    /// Buffer capacity K in chunks.
    pub capacity_chunks: usize,
    /// Samples in the harmonic-mean throughput estimate.
    pub window: usize,
}

impl Default for QuetraConfig {
    fn default() -> Self {
        // 60 s buffer threshold / 4 s chunks
        QuetraConfig { capacity_chunks: 15, window: 5 }
    }
}

/// Mean number in system of an M/D/1/K queue with load `rho` (unit service
/// time, arrivals Poisson at rate `rho`, at most `k` in the system).
///
/// Solves the departure-epoch embedded Markov chain on `{0, .., k-1}` and
/// converts it to the time-average distribution with
/// `p_n = pi_n / (pi_0 + rho)` for `n < k` and `p_k = 1 - 1 / (pi_0 + rho)`.
pub fn md1k_mean_occupancy(rho: f64, k: usize) -> f64 {
    assert!(k >= 1, "capacity must be positive");
    if rho <= 0.0 {
        return 0.0;
    }
    // a[j] = P(j Poisson arrivals during one service)
    let log_rho = rho.ln();
    let mut a = Vec::with_capacity(k);
    let mut log_fact = 0.0;
    for j in 0..k {
        if j > 0 {
            log_fact += (j as f64).ln();
        }
        a.push((j as f64 * log_rho - rho - log_fact).exp());
    }

    let n = k;
    let mut p = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let base = i.saturating_sub(1);
        let mut mass = 0.0;
        for j in base..n - 1 {
            let v = a[j - base];
            p[(i, j)] = v;
            mass += v;
        }
        p[(i, n - 1)] = (1.0 - mass).max(0.0);
    }

    // pi (P - I) = 0 with sum(pi) = 1, as a square system on the transpose.
    let mut sys = (p - DMatrix::<f64>::identity(n, n)).transpose();
    for j in 0..n {
        sys[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(n);
    rhs[n - 1] = 1.0;
    let pi = sys.lu().solve(&rhs).expect("embedded chain has a unique stationary law");

    let denom = pi[0] + rho;
    let mut mean = 0.0;
    for i in 1..n {
        mean += i as f64 * pi[i] / denom;
    }
    mean + k as f64 * (1.0 - 1.0 / denom)
}

/// Picks the level whose predicted steady-state buffer occupancy is closest to
/// the current buffer (in chunks). Ties go to the higher level.
pub fn quetra_select(state: &ControllerState, ladder_kbps: &[u32], cfg: &QuetraConfig) -> usize {
    let est = throughput_estimate(state, ladder_kbps, cfg.window);
    let target = state.buffer_s / state.chunk_duration_s;
    let mut best = 0;
    let mut best_gap = f64::INFINITY;
    for (i, &kbps) in ladder_kbps.iter().enumerate() {
        let rho = est / (kbps as f64 / 1000.0);
        let gap = (md1k_mean_occupancy(rho, cfg.capacity_chunks) - target).abs();
        if gap <= best_gap {
            best_gap = gap;
            best = i;
        }
    }
    best
}
