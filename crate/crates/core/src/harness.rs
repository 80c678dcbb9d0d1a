//! Evaluation and experiment plumbing shared by the CLI, the FFI layer and
//! the test suites.
//!
//! Evaluation runs one episode per trace from trace time zero and reports
//! per-trace QoE plus per-set means. Sets are never pooled: the only
//! cross-set summary is the average rank.

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::controller_by_name;
use crate::error::{Error, Result};
use crate::expert::{ExpertConfig, Oracle};
use crate::mlp::{actor_forward, argmax, Mlp};
use crate::policy::AbrPolicy;
use crate::qoe::{episode_qoe, step_reward, ChunkRecord, QoeConfig, QoeSummary};
use crate::sim::{SimConfig, Simulator, StartPosition};
use crate::train::sample_categorical;
use crate::trace::{ManifestFile, ManifestGroups, SetSpec, Trace, TraceSet};
use crate::video::{synth_video, VideoManifest};
use crate::LADDER_3G;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Bb,
    Bola,
    RobustMpc,
    Quetra,
    Oracle,
    Policy,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] =
        [Algorithm::Bb, Algorithm::Bola, Algorithm::RobustMpc, Algorithm::Quetra, Algorithm::Oracle, Algorithm::Policy];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Bb => "bb",
            Algorithm::Bola => "bola",
            Algorithm::RobustMpc => "robustmpc",
            Algorithm::Quetra => "quetra",
            Algorithm::Oracle => "oracle",
            Algorithm::Policy => "policy",
        }
    }

    /// Learned policies are evaluated once per trained model; everything
    /// else is deterministic and runs once.
    pub fn is_learned(self) -> bool {
        self == Algorithm::Policy
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

/// A learned actor used as a controller.
#[derive(Debug, Clone)]
pub struct PolicyController {
    actor: Mlp,
    greedy: bool,
    seed: u64,
    rng: ChaCha8Rng,
}

impl PolicyController {
    /// `greedy` picks the most likely level; otherwise levels are sampled
    /// from a stream reseeded with `seed` at every episode start.
    pub fn new(actor: Mlp, greedy: bool, seed: u64) -> Self {
        PolicyController { actor, greedy, seed, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }
}

impl AbrPolicy for PolicyController {
    fn name(&self) -> &str {
        "policy"
    }

    fn reset(&mut self) {
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
    }

    fn select(&mut self, sim: &Simulator) -> Result<usize> {
        let (probs, _) = actor_forward(&self.actor, sim.observe().as_slice())?;
        Ok(if self.greedy { argmax(&probs) } else { sample_categorical(&probs, &mut self.rng) })
    }
}

/// Builds a fresh controller. `model` is required for [`Algorithm::Policy`].
pub fn make_policy(
    algorithm: Algorithm,
    model: Option<&Mlp>,
    qoe: QoeConfig,
    expert: ExpertConfig,
    greedy: bool,
) -> Result<Box<dyn AbrPolicy>> {
    match algorithm {
        Algorithm::Oracle => Ok(Box::new(Oracle { cfg: expert, qoe })),
        Algorithm::Policy => {
            let actor = model.ok_or_else(|| Error::Config("policy evaluation needs a model".into()))?;
            Ok(Box::new(PolicyController::new(actor.clone(), greedy, 0)))
        }
        other => Ok(controller_by_name(other.as_str(), qoe)?),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub records: Vec<ChunkRecord>,
    pub summary: QoeSummary,
    /// Sum of per-step training rewards (first step scored against the
    /// default level).
    pub reward_sum: f64,
}

/// Plays one full episode with `policy` from the given start position.
pub fn run_episode(
    policy: &mut dyn AbrPolicy,
    trace: Arc<Trace>,
    video: Arc<VideoManifest>,
    sim_cfg: &SimConfig,
    qoe: &QoeConfig,
    start: StartPosition,
) -> Result<EpisodeResult> {
    policy.reset();
    let (mut sim, _) = Simulator::reset(trace, video.clone(), sim_cfg.clone(), start)?;
    let ladder = video.ladder_kbps();
    let mut records = Vec::with_capacity(video.n_chunks());
    let mut reward_sum = 0.0;
    while !sim.is_done() {
        let level = policy.select(&sim)?;
        let out = sim.advance(level)?;
        reward_sum += step_reward(ladder, out.prev_level, level, out.rebuffer_s, qoe);
        records.push(ChunkRecord { level, bitrate_kbps: ladder[level], rebuffer_s: out.rebuffer_s });
    }
    let summary = episode_qoe(&records, qoe)?;
    Ok(EpisodeResult { records, summary, reward_sum })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceResult {
    pub trace_id: String,
    pub summary: QoeSummary,
    pub reward_sum: f64,
}

/// One algorithm on one trace set.
#[derive(Debug, Clone, PartialEq)]
pub struct SetEvaluation {
    pub trace_set: String,
    pub per_trace: Vec<TraceResult>,
}

impl SetEvaluation {
    pub fn mean_qoe(&self) -> f64 {
        self.per_trace.iter().map(|t| t.summary.total).sum::<f64>() / self.per_trace.len() as f64
    }

    pub fn mean_reward(&self) -> f64 {
        self.per_trace.iter().map(|t| t.reward_sum).sum::<f64>() / self.per_trace.len() as f64
    }
}

/// Evaluates on every trace of `set` from trace time zero. `make` builds an
/// independent controller per trace so traces can run in parallel; results
/// keep the set's trace order.
pub fn evaluate<F>(make: F, set: &TraceSet, video: &Arc<VideoManifest>, sim_cfg: &SimConfig, qoe: &QoeConfig) -> Result<SetEvaluation>
where
    F: Fn() -> Result<Box<dyn AbrPolicy>> + Sync,
{
    if set.traces.is_empty() {
        return Err(crate::trace::TraceError::EmptySet.into());
    }
    let per_trace = set
        .traces
        .par_iter()
        .map(|trace| {
            let mut policy = make()?;
            let ep = run_episode(
                policy.as_mut(),
                Arc::new(trace.clone()),
                video.clone(),
                sim_cfg,
                qoe,
                StartPosition::Deterministic,
            )?;
            Ok(TraceResult { trace_id: trace.id().to_string(), summary: ep.summary, reward_sum: ep.reward_sum })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SetEvaluation { trace_set: set.name.clone(), per_trace })
}

/// Row of the per-trace results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub algorithm: String,
    pub trace_set: String,
    pub trace_id: String,
    pub qoe: f64,
    pub quality_sum: f64,
    pub smooth_pen: f64,
    pub rebuf_pen: f64,
}

/// Per-set means of one algorithm across runs (one run per trained model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub algorithm: String,
    pub trace_set: String,
    pub runs: usize,
    /// Mean over runs of the per-run set mean.
    pub mean_qoe: f64,
}

#[derive(Debug, Clone, Default)]
pub struct EvalReport {
    pub algorithm: String,
    /// `runs[r]` holds one [`SetEvaluation`] per trace set, in a fixed order.
    pub runs: Vec<Vec<SetEvaluation>>,
}

impl EvalReport {
    pub fn new(algorithm: impl Into<String>) -> Self {
        EvalReport { algorithm: algorithm.into(), runs: Vec::new() }
    }

    pub fn push_run(&mut self, sets: Vec<SetEvaluation>) -> Result<()> {
        if let Some(first) = self.runs.first() {
            let same = first.len() == sets.len() && first.iter().zip(&sets).all(|(a, b)| a.trace_set == b.trace_set);
            if !same {
                return Err(Error::Config("runs cover different trace sets".into()));
            }
        }
        self.runs.push(sets);
        Ok(())
    }

    pub fn summaries(&self) -> Vec<SetSummary> {
        let Some(first) = self.runs.first() else { return Vec::new() };
        (0..first.len())
            .map(|j| {
                let means: Vec<f64> = self.runs.iter().map(|run| run[j].mean_qoe()).collect();
                SetSummary {
                    algorithm: self.algorithm.clone(),
                    trace_set: first[j].trace_set.clone(),
                    runs: means.len(),
                    mean_qoe: means.iter().sum::<f64>() / means.len() as f64,
                }
            })
            .collect()
    }

    /// Per-trace rows for every run, runs in order.
    pub fn rows(&self) -> Vec<ResultRow> {
        self.runs
            .iter()
            .flatten()
            .flat_map(|set| {
                set.per_trace.iter().map(move |t| ResultRow {
                    algorithm: self.algorithm.clone(),
                    trace_set: set.trace_set.clone(),
                    trace_id: t.trace_id.clone(),
                    qoe: t.summary.total,
                    quality_sum: t.summary.quality_sum,
                    smooth_pen: t.summary.smoothness_penalty,
                    rebuf_pen: t.summary.rebuffer_penalty,
                })
            })
            .collect()
    }
}

pub fn write_rows<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_result_rows<R: Read>(r: R) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// What every output directory records next to its artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord<C> {
    pub command: String,
    pub crate_version: String,
    pub seed: Option<u64>,
    pub config: C,
}

impl<C: Serialize> RunRecord<C> {
    pub fn new(command: &str, seed: Option<u64>, config: C) -> Self {
        RunRecord { command: command.into(), crate_version: env!("CARGO_PKG_VERSION").into(), seed, config }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Evaluation options as recorded in `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub video: Option<PathBuf>,
    pub algorithm: Algorithm,
    pub models: Vec<PathBuf>,
    pub seeds: Vec<u64>,
    pub group: String,
    pub out: PathBuf,
    pub greedy: bool,
    pub sim: SimConfig,
    pub qoe: QoeConfig,
    pub expert: ExpertConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.algorithm.is_learned() && self.models.is_empty() {
            return Err(Error::Config("policy evaluation needs at least one --model".into()));
        }
        Ok(())
    }
}

/// Sizes of the synthetic fixture benchmark.
pub const FIXTURE_TRAIN: usize = 12;
pub const FIXTURE_TEST: usize = 4;
pub const FIXTURE_OOD: usize = 4;

/// Regime-switching bandwidth trace: a level drawn log-uniformly from
/// `[lo, hi]` Mbps, redrawn with probability `1 / dwell_s` each second, plus
/// +-15% per-sample noise.
pub fn synth_trace(id: &str, rng: &mut ChaCha8Rng, duration_s: usize, lo: f64, hi: f64, dwell_s: f64) -> Result<Trace> {
    let draw = |rng: &mut ChaCha8Rng| (lo.ln() + rng.gen::<f64>() * (hi / lo).ln()).exp();
    let mut level = draw(rng);
    let mut pairs = Vec::with_capacity(duration_s + 1);
    for t in 0..=duration_s {
        if rng.gen::<f64>() < 1.0 / dwell_s {
            level = draw(rng);
        }
        let bw = level * (1.0 + rng.gen_range(-0.15..0.15));
        pairs.push((t as f64, bw));
    }
    Ok(Trace::from_pairs(id, &pairs)?)
}

/// Writes the synthetic fixture benchmark to `dir`: `traces/{train,test,ood}`,
/// `video.txt` and `manifest.json`. Returns the manifest path.
pub fn write_synth_fixtures(dir: &Path, seed: u64) -> Result<PathBuf> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: [(&str, usize, f64, f64, f64); 3] =
        [("train", FIXTURE_TRAIN, 0.3, 6.0, 20.0), ("test", FIXTURE_TEST, 0.3, 6.0, 20.0), ("ood", FIXTURE_OOD, 0.1, 12.0, 6.0)];
    for (group, n, lo, hi, dwell) in groups {
        let sub = dir.join("traces").join(group);
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for i in 0..n {
            let name = format!("{group}_{i:02}.txt");
            let trace = synth_trace(&name, &mut rng, 400, lo, hi, dwell)?;
            let path = sub.join(&name);
            std::fs::write(&path, trace.to_text()).map_err(|e| Error::io(&path, e))?;
        }
    }
    let video = synth_video(&LADDER_3G, crate::video::DEFAULT_N_CHUNKS, 0.1, rng.gen())?;
    let vpath = dir.join("video.txt");
    std::fs::write(&vpath, video.to_text()).map_err(|e| Error::io(&vpath, e))?;

    let spec = |set: &str, group: &str| SetSpec { set_name: set.into(), path_glob: format!("traces/{group}/*.txt") };
    let manifest = ManifestFile {
        name: "synthetic".into(),
        ladder_kbps: LADDER_3G.to_vec(),
        mu: 4.3,
        groups: ManifestGroups {
            train: vec![spec("synth-train", "train")],
            test: vec![spec("synth-test", "test")],
            ood: vec![spec("synth-ood", "ood")],
        },
    };
    let mpath = dir.join("manifest.json");
    std::fs::write(&mpath, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&mpath, e))?;
    Ok(mpath)
}
