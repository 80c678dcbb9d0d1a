//! QoE scoring, per-step rewards, and average-rank tables.
//!
//! Quality is the bitrate in Mbps. An episode's QoE is the quality sum minus
//! `delta` times the absolute quality changes between consecutive chunks minus
//! `mu` times the total rebuffering. The per-step training reward uses the same
//! terms, but its first step also pays a switch penalty relative to the
//! simulator's default level; [`reward_qoe_correction`] recovers the exact
//! difference.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QoeError {
    #[error("episode has no chunks")]
    EmptyEpisode,
    #[error("rank table entry ({algorithm}, {trace_set}) is not finite")]
    NonFiniteEntry { algorithm: String, trace_set: String },
    #[error("rank table is empty or ragged")]
    BadTable,
    #[error("rank input: {0}")]
    BadInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QoeConfig {
    pub delta: f64,
    pub mu: f64,
}

impl QoeConfig {
    pub const fn new(mu: f64) -> Self {
        QoeConfig { delta: 1.0, mu }
    }
}

#[inline]
pub fn quality(bitrate_kbps: u32) -> f64 {
    bitrate_kbps as f64 / 1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub level: usize,
    pub bitrate_kbps: u32,
    pub rebuffer_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QoeSummary {
    pub total: f64,
    pub quality_sum: f64,
    pub smoothness_penalty: f64,
    pub rebuffer_penalty: f64,
    pub n_chunks: usize,
}

pub fn episode_qoe(records: &[ChunkRecord], cfg: &QoeConfig) -> Result<QoeSummary, QoeError> {
    if records.is_empty() {
        return Err(QoeError::EmptyEpisode);
    }
    let quality_sum: f64 = records.iter().map(|r| quality(r.bitrate_kbps)).sum();
    let switches: f64 = records
        .windows(2)
        .map(|w| (quality(w[1].bitrate_kbps) - quality(w[0].bitrate_kbps)).abs())
        .sum();
    let rebuffer: f64 = records.iter().map(|r| r.rebuffer_s).sum();
    let smoothness_penalty = cfg.delta * switches;
    let rebuffer_penalty = cfg.mu * rebuffer;
    Ok(QoeSummary {
        total: quality_sum - smoothness_penalty - rebuffer_penalty,
        quality_sum,
        smoothness_penalty,
        rebuffer_penalty,
        n_chunks: records.len(),
    })
}

/// Reward for one download: quality minus rebuffer and switch penalties.
#[inline]
pub fn step_reward(ladder_kbps: &[u32], prev_level: usize, level: usize, rebuffer_s: f64, cfg: &QoeConfig) -> f64 {
    let q = quality(ladder_kbps[level]);
    let q_prev = quality(ladder_kbps[prev_level]);
    q - cfg.mu * rebuffer_s - cfg.delta * (q - q_prev).abs()
}

/// `episode_qoe - sum(step_reward)` for an episode whose first step was
/// scored against `default_level`.
pub fn reward_qoe_correction(ladder_kbps: &[u32], default_level: usize, first_level: usize, cfg: &QoeConfig) -> f64 {
    cfg.delta * (quality(ladder_kbps[first_level]) - quality(ladder_kbps[default_level])).abs()
}

/// Algorithms x trace sets matrix of mean QoE values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoeTable {
    pub algorithms: Vec<String>,
    pub trace_sets: Vec<String>,
    /// `values[algorithm][trace_set]`
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub algorithms: Vec<String>,
    pub trace_sets: Vec<String>,
    pub qoe_table: Vec<Vec<f64>>,
    pub ranks: Vec<Vec<f64>>,
    pub ave_rank: Vec<f64>,
}

/// Rank 1 is the highest QoE in a column. Tied entries share the mean of the
/// positions they cover.
pub fn average_rank(table: &QoeTable) -> Result<RankReport, QoeError> {
    let n_alg = table.algorithms.len();
    let n_sets = table.trace_sets.len();
    if n_alg == 0 || n_sets == 0 || table.values.len() != n_alg || table.values.iter().any(|r| r.len() != n_sets) {
        return Err(QoeError::BadTable);
    }
    for (i, row) in table.values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(QoeError::NonFiniteEntry {
                    algorithm: table.algorithms[i].clone(),
                    trace_set: table.trace_sets[j].clone(),
                });
            }
        }
    }

    let mut ranks = vec![vec![0.0; n_sets]; n_alg];
    for j in 0..n_sets {
        let mut order: Vec<usize> = (0..n_alg).collect();
        order.sort_by(|&a, &b| table.values[b][j].total_cmp(&table.values[a][j]));
        let mut pos = 0;
        while pos < n_alg {
            let v = table.values[order[pos]][j];
            let mut end = pos + 1;
            while end < n_alg && table.values[order[end]][j] == v {
                end += 1;
            }
            // positions pos+1 ..= end share their mean
            let shared = (pos + 1 + end) as f64 / 2.0;
            for &i in &order[pos..end] {
                ranks[i][j] = shared;
            }
            pos = end;
        }
    }
    let ave_rank = ranks.iter().map(|r| r.iter().sum::<f64>() / n_sets as f64).collect();
    Ok(RankReport {
        algorithms: table.algorithms.clone(),
        trace_sets: table.trace_sets.clone(),
        qoe_table: table.values.clone(),
        ranks,
        ave_rank,
    })
}

/// One-decimal display rounding used in rank tables.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

impl RankReport {
    /// Rows are algorithms; columns are the per-set ranks then `ave_rank`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["algorithm".to_string()];
        header.extend(self.trace_sets.iter().cloned());
        header.push("ave_rank".into());
        out.write_record(&header)?;
        for (i, alg) in self.algorithms.iter().enumerate() {
            let mut row = vec![alg.clone()];
            row.extend(self.ranks[i].iter().map(|r| r.to_string()));
            row.push(format!("{:.1}", round1(self.ave_rank[i])));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn ave_rank_of(&self, algorithm: &str) -> Option<f64> {
        self.algorithms.iter().position(|a| a == algorithm).map(|i| self.ave_rank[i])
    }
}

/// Reads a QoE table from CSV. Two layouts are accepted:
///
/// * long: a header containing `algorithm`, `trace_set`, and `qoe` columns
///   (the evaluation results schema); rows are averaged per (algorithm, set);
/// * wide: `algorithm,<set1>,<set2>,...`, one row per algorithm. A trailing
///   `ave_rank` column, if present, is ignored.
pub fn read_qoe_table<R: Read>(r: R) -> Result<QoeTable, QoeError> {
    let bad = |m: String| QoeError::BadInput(m);
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rdr.headers().map_err(|e| bad(e.to_string()))?.iter().map(str::to_string).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let alg_col = col("algorithm").ok_or_else(|| bad("missing algorithm column".into()))?;

    let parse = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("not a number: {s:?}")));
    if let (Some(set_col), Some(qoe_col)) = (col("trace_set"), col("qoe")) {
        let mut algorithms: Vec<String> = Vec::new();
        let mut trace_sets: Vec<String> = Vec::new();
        let mut sums: Vec<Vec<(f64, usize)>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let alg = rec.get(alg_col).unwrap_or("").to_string();
            let set = rec.get(set_col).unwrap_or("").to_string();
            let v = parse(rec.get(qoe_col).unwrap_or(""))?;
            let i = match algorithms.iter().position(|a| *a == alg) {
                Some(i) => i,
                None => {
                    algorithms.push(alg);
                    sums.push(vec![(0.0, 0); trace_sets.len()]);
                    algorithms.len() - 1
                }
            };
            let j = match trace_sets.iter().position(|s| *s == set) {
                Some(j) => j,
                None => {
                    trace_sets.push(set);
                    sums.iter_mut().for_each(|row| row.push((0.0, 0)));
                    trace_sets.len() - 1
                }
            };
            sums[i][j].0 += v;
            sums[i][j].1 += 1;
        }
        let mut values = Vec::with_capacity(algorithms.len());
        for (i, row) in sums.iter().enumerate() {
            let mut out = Vec::with_capacity(row.len());
            for (j, &(s, n)) in row.iter().enumerate() {
                if n == 0 {
                    return Err(bad(format!("no rows for ({}, {})", algorithms[i], trace_sets[j])));
                }
                out.push(s / n as f64);
            }
            values.push(out);
        }
        return Ok(QoeTable { algorithms, trace_sets, values });
    }

    let set_cols: Vec<usize> = (0..header.len()).filter(|&c| c != alg_col && header[c] != "ave_rank").collect();
    let trace_sets = set_cols.iter().map(|&c| header[c].clone()).collect();
    let mut algorithms = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        algorithms.push(rec.get(alg_col).unwrap_or("").to_string());
        values.push(set_cols.iter().map(|&c| parse(rec.get(c).unwrap_or(""))).collect::<Result<Vec<_>, _>>()?);
    }
    Ok(QoeTable { algorithms, trace_sets, values })
}
