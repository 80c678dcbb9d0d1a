use serde::{Deserialize, Serialize};

use super::ControllerState;

/// Reservoir/cushion buffer thresholds in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BbConfig {
    pub reservoir_s: f64,
    pub cushion_s: f64,
}

impl Default for BbConfig {
    fn default() -> Self {
        BbConfig { reservoir_s: 5.0, cushion_s: 10.0 }
    }
}

/// Lowest level inside the reservoir, top level above reservoir + cushion,
/// linear in between (floored to a level index).
pub fn bb_select(state: &ControllerState, ladder_kbps: &[u32], cfg: &BbConfig) -> usize {
    let top = ladder_kbps.len() - 1;
    let b = state.buffer_s;
    if b <= cfg.reservoir_s {
        0
    } else if b >= cfg.reservoir_s + cfg.cushion_s {
        top
    } else {
        let frac = (b - cfg.reservoir_s) / cfg.cushion_s;
        ((top as f64 * frac).floor() as usize).min(top)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::LADDER_3G;
    use proptest::prelude::*;

    fn at(buffer_s: f64) -> ControllerState {
        ControllerState {
            buffer_s,
            throughputs_mbps: vec![],
            download_times_s: vec![],
            last_level: 1,
            next_chunk_sizes: vec![1; 6],
            next_chunk: 0,
            chunks_remaining: 49,
            chunk_duration_s: 4.0,
        }
    }

    #[test]
    fn reservoir_cushion_and_ramp() {
        let cfg = BbConfig::default();
        assert_eq!(bb_select(&at(0.0), &LADDER_3G, &cfg), 0);
        assert_eq!(bb_select(&at(15.0), &LADDER_3G, &cfg), 5);
        assert_eq!(bb_select(&at(40.0), &LADDER_3G, &cfg), 5);
        assert_eq!(bb_select(&at(10.0), &LADDER_3G, &cfg), 2);
    }

    proptest! {
        #[test]
        fn monotone_in_buffer(a in 0.0f64..70.0, b in 0.0f64..70.0) {
            let cfg = BbConfig::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(bb_select(&at(lo), &LADDER_3G, &cfg) <= bb_select(&at(hi), &LADDER_3G, &cfg));
        }
    }
}
