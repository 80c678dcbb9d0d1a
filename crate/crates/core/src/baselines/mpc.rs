use serde::{Deserialize, Serialize};

use super::{throughput_estimate, ControllerState};
use crate::qoe::{quality, QoeConfig};
use crate::video::VideoManifest;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub horizon: usize,
    /// Samples used by the harmonic-mean predictor and the error window.
    pub window: usize,
    pub qoe: QoeConfig,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig { horizon: 5, window: 5, qoe: QoeConfig::new(4.3) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcDecision {
    pub level: usize,
    /// Harmonic-mean estimate before the robustness discount.
    pub raw_estimate_mbps: f64,
    /// Estimate actually used for planning.
    pub robust_estimate_mbps: f64,
}

const TIE_EPS: f64 = 1e-9;

pub fn harmonic_mean(samples: &[f64]) -> f64 {
    samples.len() as f64 / samples.iter().map(|x| 1.0 / x).sum::<f64>()
}

/// Plans over every level sequence of length `min(horizon, remaining)` under
/// the discounted throughput prediction and returns the first level of the
/// best plan. Enumeration is lexicographic and only improvements larger than
/// a rounding tolerance replace the incumbent, so ties resolve toward lower
/// levels. Upswitches with no stall tie exactly in real arithmetic.
///
/// `past_errors` holds the relative prediction errors observed so far this
/// episode (the most recent `window` are used; empty means zero error).
pub fn robust_mpc_select(
    state: &ControllerState,
    video: &VideoManifest,
    cfg: &MpcConfig,
    past_errors: &[f64],
) -> MpcDecision {
    let ladder = video.ladder_kbps();
    let raw = throughput_estimate(state, ladder, cfg.window);
    let max_err = past_errors[past_errors.len().saturating_sub(cfg.window)..]
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    let predicted = raw / (1.0 + max_err);

    let horizon = cfg.horizon.min(state.chunks_remaining);
    if horizon == 0 {
        return MpcDecision { level: state.last_level, raw_estimate_mbps: raw, robust_estimate_mbps: predicted };
    }
    let n_levels = ladder.len();
    let chunk_s = state.chunk_duration_s;
    // download_time[k][l] for the k-th future chunk at level l
    let download_time: Vec<Vec<f64>> = (0..horizon)
        .map(|k| {
            (0..n_levels)
                .map(|l| video.chunk_size(l, state.next_chunk + k) as f64 * 8.0 / 1e6 / predicted)
                .collect()
        })
        .collect();

    let mut plan = vec![0usize; horizon];
    let mut best_level = 0;
    let mut best_score = f64::NEG_INFINITY;
    loop {
        let mut buffer = state.buffer_s;
        let mut rebuffer = 0.0;
        let mut quality_sum = 0.0;
        let mut switches = 0.0;
        let mut prev = quality(ladder[state.last_level]);
        for (k, &l) in plan.iter().enumerate() {
            let dt = download_time[k][l];
            if buffer < dt {
                rebuffer += dt - buffer;
                buffer = 0.0;
            } else {
                buffer -= dt;
            }
            buffer += chunk_s;
            let q = quality(ladder[l]);
            quality_sum += q;
            switches += (q - prev).abs();
            prev = q;
        }
        let score = quality_sum - cfg.qoe.mu * rebuffer - cfg.qoe.delta * switches;
        if score > best_score + TIE_EPS {
            best_score = score;
            best_level = plan[0];
        }
        // next sequence in lexicographic order
        let mut i = horizon;
        loop {
            if i == 0 {
                return MpcDecision { level: best_level, raw_estimate_mbps: raw, robust_estimate_mbps: predicted };
            }
            i -= 1;
            plan[i] += 1;
            if plan[i] < n_levels {
                break;
            }
            plan[i] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::synth_video;
    use crate::LADDER_3G;

    fn state(buffer_s: f64, tput: Vec<f64>, remaining: usize) -> ControllerState {
        ControllerState {
            buffer_s,
            throughputs_mbps: tput.clone(),
            download_times_s: vec![1.0; tput.len()],
            last_level: 1,
            next_chunk_sizes: vec![],
            next_chunk: 49 - remaining,
            chunks_remaining: remaining,
            chunk_duration_s: 4.0,
        }
    }

    /// Recursive enumerator written independently of the iterative planner.
    fn oracle(st: &ControllerState, video: &VideoManifest, h: usize, bw: f64, mu: f64) -> usize {
        fn rec(
            video: &VideoManifest,
            chunk: usize,
            depth: usize,
            buffer: f64,
            prev_kbps: u32,
            bw: f64,
            mu: f64,
        ) -> f64 {
            if depth == 0 {
                return 0.0;
            }
            (0..6)
                .map(|l| {
                    let kbps = LADDER_3G[l];
                    let dt = video.chunk_size(l, chunk) as f64 * 8.0 / 1e6 / bw;
                    let stall = (dt - buffer).max(0.0);
                    let nb = (buffer - dt).max(0.0) + 4.0;
                    let r = kbps as f64 / 1000.0 - mu * stall - (kbps as f64 - prev_kbps as f64).abs() / 1000.0;
                    r + rec(video, chunk + 1, depth - 1, nb, kbps, bw, mu)
                })
                .fold(f64::NEG_INFINITY, f64::max)
        }
        let mut best = (0, f64::NEG_INFINITY);
        for l in 0..6 {
            let kbps = LADDER_3G[l];
            let dt = video.chunk_size(l, st.next_chunk) as f64 * 8.0 / 1e6 / bw;
            let stall = (dt - st.buffer_s).max(0.0);
            let nb = (st.buffer_s - dt).max(0.0) + 4.0;
            let prev = LADDER_3G[st.last_level];
            let r = kbps as f64 / 1000.0 - mu * stall - (kbps as f64 - prev as f64).abs() / 1000.0;
            let total = r + rec(video, st.next_chunk + 1, h - 1, nb, kbps, bw, mu);
            if total > best.1 + 1e-9 {
                best = (l, total);
            }
        }
        best.0
    }

    #[test]
    fn harmonic_prediction() {
        let video = synth_video(&LADDER_3G, 49, 0.0, 0).unwrap();
        let d = robust_mpc_select(&state(5.0, vec![1.0, 2.0], 40), &video, &MpcConfig::default(), &[0.0]);
        assert!((d.raw_estimate_mbps - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(d.raw_estimate_mbps, d.robust_estimate_mbps);
        let d = robust_mpc_select(&state(5.0, vec![1.0, 2.0], 40), &video, &MpcConfig::default(), &[0.0, 0.5, 0.25]);
        assert!((d.robust_estimate_mbps - (4.0 / 3.0) / 1.5).abs() < 1e-12);
    }

    #[test]
    fn cold_start_uses_lowest_rate() {
        let video = synth_video(&LADDER_3G, 49, 0.0, 0).unwrap();
        let d = robust_mpc_select(&state(0.0, vec![], 49), &video, &MpcConfig::default(), &[]);
        assert_eq!(d.raw_estimate_mbps, 0.3);
    }

    #[test]
    fn abundant_bandwidth_deep_buffer_goes_top() {
        let video = synth_video(&LADDER_3G, 49, 0.1, 1).unwrap();
        let st = state(30.0, vec![100.0; 8], 30);
        assert_eq!(robust_mpc_select(&st, &video, &MpcConfig::default(), &[0.0]).level, 5);
        assert_eq!(oracle(&st, &video, 5, 100.0, 4.3), 5);
    }

    #[test]
    fn matches_recursive_enumeration() {
        let video = synth_video(&LADDER_3G, 49, 0.15, 9).unwrap();
        let mut seed = 17u64;
        let mut next = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..60 {
            let h = 1 + (next() * 3.0) as usize;
            let buffer = next() * 20.0;
            let tput: Vec<f64> = (0..5).map(|_| 0.2 + next() * 5.0).collect();
            let remaining = 3 + (next() * 40.0) as usize;
            let mut st = state(buffer, tput, remaining);
            st.last_level = (next() * 6.0) as usize;
            let cfg = MpcConfig { horizon: h, ..MpcConfig::default() };
            let d = robust_mpc_select(&st, &video, &cfg, &[0.0]);
            assert_eq!(d.level, oracle(&st, &video, h, d.robust_estimate_mbps, 4.3));
        }
    }

    #[test]
    fn horizon_one_is_single_step_argmax() {
        let video = synth_video(&LADDER_3G, 49, 0.0, 0).unwrap();
        let st = state(2.0, vec![1.5; 3], 20);
        let cfg = MpcConfig { horizon: 1, ..MpcConfig::default() };
        let d = robust_mpc_select(&st, &video, &cfg, &[0.0]);
        let scores: Vec<f64> = (0..6)
            .map(|l| {
                let dt = video.chunk_size(l, st.next_chunk) as f64 * 8.0 / 1e6 / 1.5;
                let q = LADDER_3G[l] as f64 / 1000.0;
                q - 4.3 * (dt - 2.0).max(0.0) - (q - 0.75).abs()
            })
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(d.level, scores.iter().position(|&s| s == max).unwrap());
    }
}
