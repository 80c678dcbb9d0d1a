//! Network bandwidth traces and benchmark manifests.
//!
//! A trace file is plain text with one `<time_s> <bandwidth_mbps>` pair per
//! line (the Mahimahi/Pensieve "cooked" layout). A benchmark manifest is a JSON
//! document that names trace sets per role and points at them with globs
//! relative to the manifest's own directory.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{id}: line {line}: malformed field {field:?}")]
    MalformedLine { id: String, line: usize, field: String },
    #[error("{id}: line {line}: time {time} does not increase")]
    NonMonotonicTime { id: String, line: usize, time: f64 },
    #[error("{id}: line {line}: bandwidth {bw} is negative or not finite")]
    BadBandwidth { id: String, line: usize, bw: f64 },
    #[error("{id}: need at least 2 points, found {found}")]
    TooFewPoints { id: String, found: usize },
    #[error("missing file or empty glob: {0}")]
    MissingFile(String),
    #[error("trace id {id} appears twice within the {role} role")]
    DuplicateTraceId { id: String, role: Role },
    #[error("trace id {id} is used by both {first} and {second}")]
    OverlappingRoles { id: String, first: Role, second: Role },
    #[error("bad bitrate ladder {0:?}: need 6 strictly increasing positive entries")]
    BadLadder(Vec<u32>),
    #[error("rebuffer penalty mu must be positive and finite, got {0}")]
    BadMu(f64),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("trace set is empty")]
    EmptySet,
}

/// One `(time, bandwidth)` sample. Time in seconds, bandwidth in Mbps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub time_s: f64,
    pub bandwidth_mbps: f64,
}

/// A validated bandwidth trace: at least two points, strictly increasing
/// timestamps, finite non-negative bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    id: String,
    points: Vec<TracePoint>,
}

impl Trace {
    pub fn new(id: impl Into<String>, points: Vec<TracePoint>) -> Result<Self, TraceError> {
        let id = id.into();
        for (i, p) in points.iter().enumerate() {
            if !p.time_s.is_finite() || p.time_s < 0.0 {
                return Err(TraceError::MalformedLine {
                    id,
                    line: i + 1,
                    field: p.time_s.to_string(),
                });
            }
            if !p.bandwidth_mbps.is_finite() || p.bandwidth_mbps < 0.0 {
                return Err(TraceError::BadBandwidth { id, line: i + 1, bw: p.bandwidth_mbps });
            }
            if i > 0 && p.time_s <= points[i - 1].time_s {
                return Err(TraceError::NonMonotonicTime { id, line: i + 1, time: p.time_s });
            }
        }
        if points.len() < 2 {
            return Err(TraceError::TooFewPoints { id, found: points.len() });
        }
        Ok(Trace { id, points })
    }

    /// Convenience constructor from `(time_s, bandwidth_mbps)` tuples.
    pub fn from_pairs(id: impl Into<String>, pairs: &[(f64, f64)]) -> Result<Self, TraceError> {
        let points = pairs
            .iter()
            .map(|&(time_s, bandwidth_mbps)| TracePoint { time_s, bandwidth_mbps })
            .collect();
        Trace::new(id, points)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn points(&self) -> &[TracePoint] {
        &self.points
    }

    /// Length of one replay cycle in seconds (first to last timestamp).
    pub fn period_s(&self) -> f64 {
        self.points[self.points.len() - 1].time_s - self.points[0].time_s
    }

    pub fn min_bandwidth(&self) -> f64 {
        self.points.iter().map(|p| p.bandwidth_mbps).fold(f64::INFINITY, f64::min)
    }

    pub fn max_bandwidth(&self) -> f64 {
        self.points.iter().map(|p| p.bandwidth_mbps).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Serializes back to the two-column text format. Uses the shortest
    /// representation that parses back to the identical `f64`.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.points.len() * 16);
        for p in &self.points {
            out.push_str(&format!("{} {}\n", p.time_s, p.bandwidth_mbps));
        }
        out
    }
}

/// Parses the two-column trace format. Blank lines and `#` comments are skipped.
pub fn parse_trace(text: &str, id: &str) -> Result<Trace, TraceError> {
    let mut points = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let mut next_num = || -> Result<f64, TraceError> {
            let field = fields.next().unwrap_or("");
            field.parse::<f64>().map_err(|_| TraceError::MalformedLine {
                id: id.to_string(),
                line: lineno + 1,
                field: field.to_string(),
            })
        };
        let time_s = next_num()?;
        let bandwidth_mbps = next_num()?;
        if let Some(prev) = points.last() {
            let prev: &TracePoint = prev;
            if time_s <= prev.time_s {
                return Err(TraceError::NonMonotonicTime {
                    id: id.to_string(),
                    line: lineno + 1,
                    time: time_s,
                });
            }
        }
        if !bandwidth_mbps.is_finite() || bandwidth_mbps < 0.0 {
            return Err(TraceError::BadBandwidth {
                id: id.to_string(),
                line: lineno + 1,
                bw: bandwidth_mbps,
            });
        }
        points.push(TracePoint { time_s, bandwidth_mbps });
    }
    Trace::new(id, points)
}

pub fn load_trace(path: &Path, id: &str) -> Result<Trace, TraceError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| TraceError::MissingFile(format!("{}: {e}", path.display())))?;
    parse_trace(&text, id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Test,
    Ood,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Train => "train",
            Role::Test => "test",
            Role::Ood => "ood",
        })
    }
}

#[derive(Debug, Clone)]
pub struct TraceSet {
    pub name: String,
    pub role: Role,
    pub traces: Vec<Trace>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStats {
    pub count: usize,
    pub min_bw: f64,
    pub max_bw: f64,
}

/// Trace count and bandwidth range over every point of every member trace.
pub fn trace_stats(set: &TraceSet) -> Result<TraceStats, TraceError> {
    if set.traces.is_empty() {
        return Err(TraceError::EmptySet);
    }
    let min_bw = set.traces.iter().map(Trace::min_bandwidth).fold(f64::INFINITY, f64::min);
    let max_bw = set.traces.iter().map(Trace::max_bandwidth).fold(f64::NEG_INFINITY, f64::max);
    Ok(TraceStats { count: set.traces.len(), min_bw, max_bw })
}

/// On-disk manifest layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestFile {
    pub name: String,
    pub ladder_kbps: Vec<u32>,
    pub mu: f64,
    pub groups: ManifestGroups,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ManifestGroups {
    #[serde(default)]
    pub train: Vec<SetSpec>,
    #[serde(default)]
    pub test: Vec<SetSpec>,
    #[serde(default)]
    pub ood: Vec<SetSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SetSpec {
    pub set_name: String,
    pub path_glob: String,
}

#[derive(Debug, Clone)]
pub struct BenchmarkManifest {
    pub name: String,
    /// All training trace sets merged; training shuffles over the whole pool.
    pub train: TraceSet,
    pub test: Vec<TraceSet>,
    pub ood: Vec<TraceSet>,
    pub ladder_kbps: Vec<u32>,
    pub mu: f64,
}

impl BenchmarkManifest {
    pub fn group(&self, role: Role) -> Vec<&TraceSet> {
        match role {
            Role::Train => vec![&self.train],
            Role::Test => self.test.iter().collect(),
            Role::Ood => self.ood.iter().collect(),
        }
    }
}

pub fn validate_ladder(ladder: &[u32]) -> Result<(), TraceError> {
    let ok = ladder.len() == crate::N_LEVELS
        && ladder[0] > 0
        && ladder.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(TraceError::BadLadder(ladder.to_vec()))
    }
}

/// Loads and fully validates a manifest and every trace it references.
pub fn load_manifest(path: &Path) -> Result<BenchmarkManifest, TraceError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| TraceError::MissingFile(format!("{}: {e}", path.display())))?;
    let file: ManifestFile =
        serde_json::from_str(&text).map_err(|e| TraceError::Manifest(e.to_string()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    build_manifest(file, &base)
}

pub fn build_manifest(file: ManifestFile, base: &Path) -> Result<BenchmarkManifest, TraceError> {
    validate_ladder(&file.ladder_kbps)?;
    if !(file.mu.is_finite() && file.mu > 0.0) {
        return Err(TraceError::BadMu(file.mu));
    }
    if file.groups.train.is_empty() {
        return Err(TraceError::Manifest("no training trace sets".into()));
    }

    let mut seen: HashMap<String, Role> = HashMap::new();
    let mut load_group = |specs: &[SetSpec], role: Role| -> Result<Vec<TraceSet>, TraceError> {
        let mut sets = Vec::with_capacity(specs.len());
        for spec in specs {
            if spec.set_name.is_empty() {
                return Err(TraceError::Manifest("empty set_name".into()));
            }
            let traces = load_glob(base, &spec.path_glob)?;
            for t in &traces {
                match seen.get(t.id()) {
                    Some(&r) if r == role => {
                        return Err(TraceError::DuplicateTraceId { id: t.id().to_string(), role })
                    }
                    Some(&r) => {
                        return Err(TraceError::OverlappingRoles {
                            id: t.id().to_string(),
                            first: r,
                            second: role,
                        })
                    }
                    None => {
                        seen.insert(t.id().to_string(), role);
                    }
                }
            }
            sets.push(TraceSet { name: spec.set_name.clone(), role, traces });
        }
        Ok(sets)
    };

    let train_sets = load_group(&file.groups.train, Role::Train)?;
    let test = load_group(&file.groups.test, Role::Test)?;
    let ood = load_group(&file.groups.ood, Role::Ood)?;

    let train = TraceSet {
        name: train_sets.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join("+"),
        role: Role::Train,
        traces: train_sets.into_iter().flat_map(|s| s.traces).collect(),
    };
    Ok(BenchmarkManifest {
        name: file.name,
        train,
        test,
        ood,
        ladder_kbps: file.ladder_kbps,
        mu: file.mu,
    })
}

/// Trace ids are the file path relative to the manifest directory, so the same
/// file referenced from two roles is detected as an overlap.
fn load_glob(base: &Path, pattern: &str) -> Result<Vec<Trace>, TraceError> {
    let full = base.join(pattern);
    let full_str = full.to_string_lossy().to_string();
    let mut paths: Vec<PathBuf> = glob::glob(&full_str)
        .map_err(|e| TraceError::Manifest(format!("bad glob {pattern:?}: {e}")))?
        .filter_map(|entry| entry.ok())
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(TraceError::MissingFile(full_str));
    }
    paths
        .iter()
        .map(|p| {
            let rel = p.strip_prefix(base).unwrap_or(p);
            let id = rel.to_string_lossy().replace('\\', "/");
            load_trace(p, &id)
        })
        .collect()
}
