//! Trace-driven chunk-level playback simulator.
//!
//! Dynamics follow the classic Pensieve environment: a chunk is downloaded by
//! integrating the piecewise-constant trace bandwidth (scaled by the payload
//! portion), one link RTT is added, the playback buffer drains for the duration
//! of the download and then gains one chunk. When the buffer exceeds its
//! threshold the client sleeps in fixed increments, which also advances the
//! trace. Segment `i` of a trace carries `bandwidth[i]` over `[t_i, t_{i+1})`;
//! replay wraps cyclically after the last timestamp.
//!
//! Everything here is a pure function of (trace, video, config, start, actions).
//! A [`Simulator`] is cheap to clone, and cloning is how lookahead snapshots work.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::Trace;
use crate::video::VideoManifest;

pub const HISTORY_LEN: usize = 8;
pub const OBS_ROWS: usize = 6;
pub const OBS_DIM: usize = OBS_ROWS * HISTORY_LEN;

const BITS_PER_BYTE: f64 = 8.0;
const BYTES_PER_MB: f64 = 1e6;
const THROUGHPUT_NORM: f64 = 8.0;
const SECONDS_NORM: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("action {action} out of range for {n_levels} levels")]
    BadAction { action: usize, n_levels: usize },
    #[error("trace {0} delivers no bytes over a full cycle")]
    StalledForever(String),
    #[error("invalid simulator config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub chunk_duration_ms: u32,
    pub buffer_threshold_ms: u32,
    pub drain_sleep_ms: u32,
    pub link_rtt_ms: u32,
    pub payload_portion: f64,
    pub default_quality_level: usize,
    pub throughput_history_len: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            chunk_duration_ms: 4000,
            buffer_threshold_ms: 60_000,
            drain_sleep_ms: 500,
            link_rtt_ms: 80,
            payload_portion: 0.95,
            default_quality_level: 1,
            throughput_history_len: HISTORY_LEN,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, video: &VideoManifest) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::BadConfig(m.to_string()));
        if self.chunk_duration_ms == 0 || self.buffer_threshold_ms == 0 || self.drain_sleep_ms == 0 {
            return bad("durations must be positive");
        }
        if self.chunk_duration_ms != video.chunk_duration_ms() {
            return bad("chunk duration disagrees with the video");
        }
        if !(self.payload_portion > 0.0 && self.payload_portion <= 1.0) {
            return bad("payload_portion must be in (0, 1]");
        }
        if self.default_quality_level >= video.n_levels() {
            return bad("default_quality_level out of range");
        }
        if self.throughput_history_len == 0 || self.throughput_history_len > HISTORY_LEN {
            return bad("throughput_history_len must be in 1..=8");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StartPosition {
    /// Trace time zero.
    Deterministic,
    /// Seeded uniform position within one trace cycle.
    RandomOffset(u64),
}

/// The 48-entry flattened 6x8 state matrix (row-major).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.0[r * HISTORY_LEN..(r + 1) * HISTORY_LEN]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub delay_s: f64,
    pub sleep_s: f64,
    pub rebuffer_s: f64,
    pub buffer_before_s: f64,
    pub buffer_after_s: f64,
    pub prev_level: usize,
    pub selected_level: usize,
    pub chunk_bytes: u64,
    pub done: bool,
}

impl StepOutcome {
    pub fn buffer_after_ms(&self) -> f64 {
        self.buffer_after_s * 1000.0
    }
}

/// Buffer recurrence for one download, before any drain-sleep.
/// Returns `(rebuffer_s, buffer_after_s)`.
#[inline]
pub fn advance_buffer(buffer_s: f64, delay_s: f64, chunk_s: f64) -> (f64, f64) {
    let rebuffer = (delay_s - buffer_s).max(0.0);
    let after = (buffer_s - delay_s).max(0.0) + chunk_s;
    (rebuffer, after)
}

/// Mutable playback state. Cloning yields an independent snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    trace: Arc<Trace>,
    segment: usize,
    offset_s: f64,
    buffer_s: f64,
    next_chunk: usize,
    last_level: usize,
    /// Oldest first; the newest sample sits in the last slot.
    throughput_mbps: [f64; HISTORY_LEN],
    download_time_s: [f64; HISTORY_LEN],
    /// Total trace time consumed since reset.
    elapsed_s: f64,
}

impl SimState {
    pub fn trace(&self) -> &Arc<Trace> {
        &self.trace
    }

    pub fn buffer_s(&self) -> f64 {
        self.buffer_s
    }

    pub fn next_chunk(&self) -> usize {
        self.next_chunk
    }

    pub fn last_level(&self) -> usize {
        self.last_level
    }

    pub fn elapsed_s(&self) -> f64 {
        self.elapsed_s
    }

    /// Position within the current trace cycle, in seconds from the first timestamp.
    pub fn cycle_position_s(&self) -> f64 {
        let pts = self.trace.points();
        pts[self.segment].time_s - pts[0].time_s + self.offset_s
    }
}

#[derive(Debug, Clone)]
pub struct Simulator {
    video: Arc<VideoManifest>,
    cfg: SimConfig,
    state: SimState,
}

impl Simulator {
    /// Starts a fresh episode: empty buffer, chunk 0, zeroed histories.
    pub fn reset(
        trace: Arc<Trace>,
        video: Arc<VideoManifest>,
        cfg: SimConfig,
        start: StartPosition,
    ) -> Result<(Simulator, Observation), SimError> {
        cfg.validate(&video)?;
        let (segment, offset_s) = match start {
            StartPosition::Deterministic => (0, 0.0),
            StartPosition::RandomOffset(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let pos = rng.gen::<f64>() * trace.period_s();
                locate(&trace, pos)
            }
        };
        let state = SimState {
            trace,
            segment,
            offset_s,
            buffer_s: 0.0,
            next_chunk: 0,
            last_level: cfg.default_quality_level,
            throughput_mbps: [0.0; HISTORY_LEN],
            download_time_s: [0.0; HISTORY_LEN],
            elapsed_s: 0.0,
        };
        let sim = Simulator { video, cfg, state };
        let obs = sim.observe();
        Ok((sim, obs))
    }

    pub fn video(&self) -> &Arc<VideoManifest> {
        &self.video
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn snapshot(&self) -> SimState {
        self.state.clone()
    }

    pub fn restore(&mut self, snapshot: &SimState) {
        self.state = snapshot.clone();
    }

    pub fn is_done(&self) -> bool {
        self.state.next_chunk >= self.video.n_chunks()
    }

    pub fn chunks_remaining(&self) -> usize {
        self.video.n_chunks() - self.state.next_chunk
    }

    /// Number of real (non-padding) entries in the history rows.
    pub fn history_filled(&self) -> usize {
        self.state.next_chunk.min(self.cfg.throughput_history_len)
    }

    /// Past throughput samples in Mbps, oldest first, padding excluded.
    pub fn throughput_history(&self) -> &[f64] {
        &self.state.throughput_mbps[HISTORY_LEN - self.history_filled()..]
    }

    pub fn download_time_history(&self) -> &[f64] {
        &self.state.download_time_s[HISTORY_LEN - self.history_filled()..]
    }

    pub fn observe(&self) -> Observation {
        let s = &self.state;
        let v = &self.video;
        let mut m = [0.0; OBS_DIM];
        let last = HISTORY_LEN - 1;
        let top = *v.ladder_kbps().last().unwrap() as f64;
        m[last] = v.ladder_kbps()[s.last_level] as f64 / top;
        m[HISTORY_LEN + last] = s.buffer_s / SECONDS_NORM;
        for i in 0..HISTORY_LEN {
            m[2 * HISTORY_LEN + i] = s.throughput_mbps[i] / THROUGHPUT_NORM;
            m[3 * HISTORY_LEN + i] = s.download_time_s[i] / SECONDS_NORM;
        }
        if s.next_chunk < v.n_chunks() {
            for l in 0..v.n_levels() {
                m[4 * HISTORY_LEN + l] = v.chunk_size(l, s.next_chunk) as f64 / BYTES_PER_MB;
            }
        }
        m[5 * HISTORY_LEN + last] = (v.n_chunks() - s.next_chunk) as f64 / v.n_chunks() as f64;
        Observation(m)
    }

    /// Steps the episode and returns the next observation.
    pub fn step(&mut self, action: usize) -> Result<(Observation, StepOutcome), SimError> {
        let outcome = self.advance(action)?;
        Ok((self.observe(), outcome))
    }

    /// Steps the episode without building an observation (lookahead path).
    pub fn advance(&mut self, action: usize) -> Result<StepOutcome, SimError> {
        if self.is_done() {
            return Err(SimError::EpisodeFinished);
        }
        let n_levels = self.video.n_levels();
        if action >= n_levels {
            return Err(SimError::BadAction { action, n_levels });
        }
        let chunk_bytes = self.video.chunk_size(action, self.state.next_chunk);
        let delay_s = self.simulate_download(chunk_bytes)?;

        let buffer_before_s = self.state.buffer_s;
        let (rebuffer_s, mut buffer_s) =
            advance_buffer(buffer_before_s, delay_s, self.video.chunk_duration_s());

        let threshold_s = self.cfg.buffer_threshold_ms as f64 / 1000.0;
        let mut sleep_s = 0.0;
        if buffer_s > threshold_s {
            let drain_s = self.cfg.drain_sleep_ms as f64 / 1000.0;
            sleep_s = ((buffer_s - threshold_s) / drain_s).ceil() * drain_s;
            buffer_s -= sleep_s;
            self.advance_time(sleep_s);
        }

        let s = &mut self.state;
        s.throughput_mbps.rotate_left(1);
        s.download_time_s.rotate_left(1);
        s.throughput_mbps[HISTORY_LEN - 1] = chunk_bytes as f64 * BITS_PER_BYTE / delay_s / BYTES_PER_MB;
        s.download_time_s[HISTORY_LEN - 1] = delay_s;
        let keep = self.cfg.throughput_history_len;
        if keep < HISTORY_LEN {
            s.throughput_mbps[..HISTORY_LEN - keep].fill(0.0);
            s.download_time_s[..HISTORY_LEN - keep].fill(0.0);
        }

        let prev_level = s.last_level;
        s.buffer_s = buffer_s;
        s.last_level = action;
        s.next_chunk += 1;
        Ok(StepOutcome {
            delay_s,
            sleep_s,
            rebuffer_s,
            buffer_before_s,
            buffer_after_s: buffer_s,
            prev_level,
            selected_level: action,
            chunk_bytes,
            done: s.next_chunk >= self.video.n_chunks(),
        })
    }

    /// Time to deliver `chunk_bytes` from the current cursor plus one RTT.
    /// Advances the cursor by the full delay, RTT included.
    pub fn simulate_download(&mut self, chunk_bytes: u64) -> Result<f64, SimError> {
        if !self.trace_delivers() {
            return Err(SimError::StalledForever(self.state.trace.id().to_string()));
        }
        let s = &mut self.state;
        let pts = s.trace.points();
        let n_segments = pts.len() - 1;
        let bytes_per_mbit_s = BYTES_PER_MB / BITS_PER_BYTE * self.cfg.payload_portion;

        let mut remaining = chunk_bytes as f64;
        let mut transfer_s = 0.0;
        loop {
            let seg_len = pts[s.segment + 1].time_s - pts[s.segment].time_s;
            let avail = seg_len - s.offset_s;
            let rate = pts[s.segment].bandwidth_mbps * bytes_per_mbit_s;
            if rate > 0.0 && rate * avail >= remaining {
                let t = remaining / rate;
                transfer_s += t;
                s.offset_s += t;
                if s.offset_s >= seg_len {
                    s.offset_s = 0.0;
                    s.segment = (s.segment + 1) % n_segments;
                }
                break;
            }
            remaining -= rate * avail;
            transfer_s += avail;
            s.offset_s = 0.0;
            s.segment = (s.segment + 1) % n_segments;
        }
        s.elapsed_s += transfer_s;
        let rtt_s = self.cfg.link_rtt_ms as f64 / 1000.0;
        self.advance_time(rtt_s);
        Ok(transfer_s + rtt_s)
    }

    fn trace_delivers(&self) -> bool {
        let pts = self.state.trace.points();
        pts[..pts.len() - 1].iter().any(|p| p.bandwidth_mbps > 0.0)
    }

    /// Moves the trace cursor forward without transferring data.
    fn advance_time(&mut self, mut dt: f64) {
        let s = &mut self.state;
        s.elapsed_s += dt;
        let pts = s.trace.points();
        let n_segments = pts.len() - 1;
        let period = s.trace.period_s();
        if dt >= period {
            dt %= period;
        }
        loop {
            let seg_len = pts[s.segment + 1].time_s - pts[s.segment].time_s;
            let avail = seg_len - s.offset_s;
            if dt < avail {
                s.offset_s += dt;
                return;
            }
            dt -= avail;
            s.offset_s = 0.0;
            s.segment = (s.segment + 1) % n_segments;
        }
    }
}

fn locate(trace: &Trace, pos: f64) -> (usize, f64) {
    let pts = trace.points();
    let t = pts[0].time_s + pos;
    let seg = match pts.binary_search_by(|p| p.time_s.total_cmp(&t)) {
        Ok(i) => i,
        Err(i) => i - 1,
    }
    .min(pts.len() - 2);
    (seg, t - pts[seg].time_s)
}
