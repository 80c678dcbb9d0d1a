//! Trace-driven adaptive bitrate streaming: simulator, QoE metrics,
//! rule-based controllers, a lookahead expert and a two-stage learned policy.

pub mod baselines;
pub mod error;
pub mod expert;
pub mod harness;
pub mod mlp;
pub mod policy;
pub mod qoe;
pub mod sim;
pub mod trace;
pub mod train;
pub mod video;

pub use error::{Error, Result};

/// Number of quality levels in every bitrate ladder.
pub const N_LEVELS: usize = 6;

/// Ladder (kbps) used with 3G-era trace sets.
pub const LADDER_3G: [u32; N_LEVELS] = [300, 750, 1200, 1850, 2850, 4300];

/// Ladder (kbps) used with 4G and 5G trace sets.
pub const LADDER_4G: [u32; N_LEVELS] = [1000, 2500, 5000, 8000, 16000, 40000];
