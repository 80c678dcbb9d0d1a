//! Video size tables.
//!
//! File layout: the first non-empty line is the bitrate ladder in kbps, then
//! one line per level (lowest first) of space-separated chunk sizes in bytes.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::N_LEVELS;

pub const DEFAULT_CHUNK_DURATION_MS: u32 = 4000;
pub const DEFAULT_N_CHUNKS: usize = 49;

#[derive(Debug, Error)]
pub enum VideoError {
    #[error("missing video file {0}")]
    MissingFile(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("chunk size at level {level}, chunk {chunk} is not positive")]
    NonPositiveSize { level: usize, chunk: usize },
    #[error("malformed video file at line {line}: {field:?}")]
    Malformed { line: usize, field: String },
    #[error("bad ladder {0:?}")]
    BadLadder(Vec<u32>),
    #[error("jitter fraction {0} outside [0, 0.5)")]
    BadJitter(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoManifest {
    n_chunks: usize,
    chunk_duration_ms: u32,
    /// `sizes_bytes[level][chunk]`
    sizes_bytes: Vec<Vec<u64>>,
    ladder_kbps: Vec<u32>,
}

impl VideoManifest {
    pub fn new(
        ladder_kbps: Vec<u32>,
        sizes_bytes: Vec<Vec<u64>>,
        chunk_duration_ms: u32,
    ) -> Result<Self, VideoError> {
        let ladder_ok = ladder_kbps.len() == N_LEVELS
            && ladder_kbps[0] > 0
            && ladder_kbps.windows(2).all(|w| w[0] < w[1]);
        if !ladder_ok {
            return Err(VideoError::BadLadder(ladder_kbps));
        }
        if sizes_bytes.len() != ladder_kbps.len() {
            return Err(VideoError::DimensionMismatch(format!(
                "{} size rows for a {}-level ladder",
                sizes_bytes.len(),
                ladder_kbps.len()
            )));
        }
        let n_chunks = sizes_bytes[0].len();
        if n_chunks == 0 {
            return Err(VideoError::DimensionMismatch("no chunks".into()));
        }
        for (level, row) in sizes_bytes.iter().enumerate() {
            if row.len() != n_chunks {
                return Err(VideoError::DimensionMismatch(format!(
                    "level {level} has {} chunks, expected {n_chunks}",
                    row.len()
                )));
            }
            if let Some(chunk) = row.iter().position(|&s| s == 0) {
                return Err(VideoError::NonPositiveSize { level, chunk });
            }
        }
        if chunk_duration_ms == 0 {
            return Err(VideoError::DimensionMismatch("zero chunk duration".into()));
        }
        let video = VideoManifest { n_chunks, chunk_duration_ms, sizes_bytes, ladder_kbps };
        for chunk in video.non_monotone_chunks() {
            log::warn!("chunk {chunk}: sizes are not increasing across levels");
        }
        Ok(video)
    }

    pub fn n_chunks(&self) -> usize {
        self.n_chunks
    }

    pub fn n_levels(&self) -> usize {
        self.ladder_kbps.len()
    }

    pub fn chunk_duration_ms(&self) -> u32 {
        self.chunk_duration_ms
    }

    pub fn chunk_duration_s(&self) -> f64 {
        self.chunk_duration_ms as f64 / 1000.0
    }

    pub fn ladder_kbps(&self) -> &[u32] {
        &self.ladder_kbps
    }

    pub fn sizes_bytes(&self) -> &[Vec<u64>] {
        &self.sizes_bytes
    }

    #[inline]
    pub fn chunk_size(&self, level: usize, chunk: usize) -> u64 {
        self.sizes_bytes[level][chunk]
    }

    /// Chunks where a higher level is not strictly larger than the one below.
    /// Real encodes do this occasionally, so it is a warning, not an error.
    pub fn non_monotone_chunks(&self) -> Vec<usize> {
        (0..self.n_chunks)
            .filter(|&c| (1..self.n_levels()).any(|l| self.sizes_bytes[l][c] <= self.sizes_bytes[l - 1][c]))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let join = |it: &mut dyn Iterator<Item = String>| it.collect::<Vec<_>>().join(" ");
        let mut out = join(&mut self.ladder_kbps.iter().map(|v| v.to_string()));
        out.push('\n');
        for row in &self.sizes_bytes {
            out.push_str(&join(&mut row.iter().map(|v| v.to_string())));
            out.push('\n');
        }
        out
    }
}

pub fn parse_video(text: &str) -> Result<VideoManifest, VideoError> {
    let mut rows: Vec<(usize, Vec<u64>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals = line
            .split_whitespace()
            .map(|f| {
                f.parse::<u64>().map_err(|_| VideoError::Malformed { line: i + 1, field: f.to_string() })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((i + 1, vals));
    }
    if rows.is_empty() {
        return Err(VideoError::DimensionMismatch("empty file".into()));
    }
    let (line, ladder) = rows.remove(0);
    let ladder = ladder
        .into_iter()
        .map(|v| u32::try_from(v).map_err(|_| VideoError::Malformed { line, field: v.to_string() }))
        .collect::<Result<Vec<_>, _>>()?;
    let sizes = rows.into_iter().map(|(_, r)| r).collect::<Vec<_>>();
    if sizes.len() != ladder.len() {
        return Err(VideoError::DimensionMismatch(format!(
            "{} size rows for a {}-level ladder",
            sizes.len(),
            ladder.len()
        )));
    }
    VideoManifest::new(ladder, sizes, DEFAULT_CHUNK_DURATION_MS)
}

pub fn load_video(path: &Path) -> Result<VideoManifest, VideoError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| VideoError::MissingFile(format!("{}: {e}", path.display())))?;
    parse_video(&text)
}

/// Synthetic size table: each chunk is the nominal `kbps * 4 s / 8` bytes,
/// scaled by `1 + u` with `u` uniform in `[-jitter, +jitter]`.
pub fn synth_video(
    ladder_kbps: &[u32],
    n_chunks: usize,
    jitter_fraction: f64,
    seed: u64,
) -> Result<VideoManifest, VideoError> {
    if !(0.0..0.5).contains(&jitter_fraction) {
        return Err(VideoError::BadJitter(jitter_fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let secs = DEFAULT_CHUNK_DURATION_MS as f64 / 1000.0;
    let sizes = ladder_kbps
        .iter()
        .map(|&kbps| {
            (0..n_chunks)
                .map(|_| {
                    let u = if jitter_fraction > 0.0 {
                        rng.gen_range(-jitter_fraction..=jitter_fraction)
                    } else {
                        0.0
                    };
                    (kbps as f64 * 1000.0 * secs / 8.0 * (1.0 + u)).round() as u64
                })
                .collect()
        })
        .collect();
    VideoManifest::new(ladder_kbps.to_vec(), sizes, DEFAULT_CHUNK_DURATION_MS)
}
