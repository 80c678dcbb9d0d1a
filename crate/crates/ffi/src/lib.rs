//! C ABI for `abr-core`.
//!
//! Objects cross the boundary as opaque handles created by `abr_*_new` /
//! `abr_*_load` and released with the matching `abr_*_free`. Every fallible
//! call returns an [`AbrStatus`]; on failure a message is available from
//! [`abr_last_error`] on the same thread. Panics never unwind into C.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use abr_core::baselines::controller_by_name;
use abr_core::error::{Category, Error};
use abr_core::expert::{beam_search, ExpertConfig, Oracle};
use abr_core::mlp::{actor_forward, argmax, Mlp};
use abr_core::policy::AbrPolicy;
use abr_core::qoe::{average_rank, episode_qoe, ChunkRecord, QoeConfig, QoeTable};
use abr_core::sim::{SimConfig, SimError, SimState, Simulator, StartPosition, OBS_DIM};
use abr_core::trace::{load_trace, Trace};
use abr_core::video::{load_video, synth_video, VideoManifest};
use abr_core::N_LEVELS;

/// Length of an observation vector.
pub const ABR_OBS_DIM: usize = 48;
/// Number of quality levels.
pub const ABR_N_LEVELS: usize = 6;

const _: () = assert!(ABR_OBS_DIM == OBS_DIM && ABR_N_LEVELS == N_LEVELS);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigError = 3,
    DataError = 4,
    RuntimeError = 5,
    EpisodeFinished = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(AbrStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match (&e, e.category()) {
            (Error::Sim(SimError::EpisodeFinished), _) => AbrStatus::EpisodeFinished,
            (Error::Sim(SimError::BadAction { .. }), _) => AbrStatus::InvalidArgument,
            (_, Category::Config) => AbrStatus::ConfigError,
            (_, Category::Data) => AbrStatus::DataError,
            (_, Category::Runtime) => AbrStatus::RuntimeError,
        };
        Fail(status, e.to_string())
    }
}

macro_rules! impl_fail_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Fail {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        }
    )*};
}
impl_fail_from!(
    abr_core::sim::SimError,
    abr_core::trace::TraceError,
    abr_core::video::VideoError,
    abr_core::qoe::QoeError,
    abr_core::expert::ExpertError,
    abr_core::mlp::MlpError,
    abr_core::baselines::ControllerError
);

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(AbrStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AbrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            AbrStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            AbrStatus::Panic
        }
    }
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(AbrStatus::NullPointer, format!("{what} is null")))
}

unsafe fn obj_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail(AbrStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail(AbrStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    let s = obj(p, "path")?;
    let s = CStr::from_ptr(s).to_str().map_err(|_| invalid("path is not UTF-8"))?;
    Ok(Path::new(s))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    let slot = obj_mut(out, "output pointer")?;
    *slot = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next `abr_*` call on the same thread.
#[no_mangle]
pub extern "C" fn abr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn abr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

// ---- traces -------------------------------------------------------------

pub struct AbrTrace(Arc<Trace>);

/// Loads a two-column `time_s bandwidth_mbps` trace file.
#[no_mangle]
pub unsafe extern "C" fn abr_trace_load(file: *const c_char, out: *mut *mut AbrTrace) -> AbrStatus {
    guard(|| {
        let p = path(file)?;
        let t = load_trace(p, &p.display().to_string())?;
        put(out, AbrTrace(Arc::new(t)))
    })
}

/// Builds a trace from parallel arrays of timestamps (s) and bandwidths (Mbps).
#[no_mangle]
pub unsafe extern "C" fn abr_trace_from_arrays(
    times_s: *const f64,
    bandwidth_mbps: *const f64,
    n: usize,
    out: *mut *mut AbrTrace,
) -> AbrStatus {
    guard(|| {
        let t = slice(times_s, n, "times_s")?;
        let b = slice(bandwidth_mbps, n, "bandwidth_mbps")?;
        let pairs: Vec<(f64, f64)> = t.iter().copied().zip(b.iter().copied()).collect();
        put(out, AbrTrace(Arc::new(Trace::from_pairs("ffi", &pairs)?)))
    })
}

#[no_mangle]
pub unsafe extern "C" fn abr_trace_free(trace: *mut AbrTrace) {
    free(trace)
}

// ---- videos -------------------------------------------------------------

pub struct AbrVideo(Arc<VideoManifest>);

#[no_mangle]
pub unsafe extern "C" fn abr_video_load(file: *const c_char, out: *mut *mut AbrVideo) -> AbrStatus {
    guard(|| put(out, AbrVideo(Arc::new(load_video(path(file)?)?))))
}

/// Synthetic chunk sizes around `kbps * 4 s / 8` with uniform `+-jitter`.
/// `ladder_kbps` must hold `ABR_N_LEVELS` entries.
#[no_mangle]
pub unsafe extern "C" fn abr_video_synth(
    ladder_kbps: *const u32,
    n_levels: usize,
    n_chunks: usize,
    jitter: f64,
    seed: u64,
    out: *mut *mut AbrVideo,
) -> AbrStatus {
    guard(|| {
        let ladder = slice(ladder_kbps, n_levels, "ladder_kbps")?;
        put(out, AbrVideo(Arc::new(synth_video(ladder, n_chunks, jitter, seed)?)))
    })
}

#[no_mangle]
pub unsafe extern "C" fn abr_video_n_chunks(video: *const AbrVideo, out: *mut usize) -> AbrStatus {
    guard(|| {
        *obj_mut(out, "out")? = obj(video, "video")?.0.n_chunks();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn abr_video_free(video: *mut AbrVideo) {
    free(video)
}

// ---- simulator ----------------------------------------------------------

pub struct AbrSimulator(Simulator);

pub struct AbrSnapshot(SimState);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AbrStepOutcome {
    pub delay_s: f64,
    pub sleep_s: f64,
    pub rebuffer_s: f64,
    pub buffer_s: f64,
    pub chunk_bytes: u64,
    pub prev_level: usize,
    pub done: bool,
}

/// Starts an episode with the default simulator settings. With
/// `random_start` the trace cursor starts at a position drawn from `seed`;
/// otherwise at trace time zero.
#[no_mangle]
pub unsafe extern "C" fn abr_sim_new(
    trace: *const AbrTrace,
    video: *const AbrVideo,
    random_start: bool,
    seed: u64,
    out: *mut *mut AbrSimulator,
) -> AbrStatus {
    guard(|| {
        let start = if random_start { StartPosition::RandomOffset(seed) } else { StartPosition::Deterministic };
        let (sim, _) = Simulator::reset(
            obj(trace, "trace")?.0.clone(),
            obj(video, "video")?.0.clone(),
            SimConfig::default(),
            start,
        )?;
        put(out, AbrSimulator(sim))
    })
}

/// Writes the current `ABR_OBS_DIM` observation into `obs`.
#[no_mangle]
pub unsafe extern "C" fn abr_sim_observe(sim: *const AbrSimulator, obs: *mut f64) -> AbrStatus {
    guard(|| {
        let o = obj(sim, "sim")?.0.observe();
        obj_mut(obs, "obs")?;
        std::slice::from_raw_parts_mut(obs, OBS_DIM).copy_from_slice(o.as_slice());
        Ok(())
    })
}

/// Downloads the next chunk at `level`. `outcome` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn abr_sim_step(sim: *mut AbrSimulator, level: usize, outcome: *mut AbrStepOutcome) -> AbrStatus {
    guard(|| {
        let o = obj_mut(sim, "sim")?.0.advance(level)?;
        if let Some(slot) = outcome.as_mut() {
            *slot = AbrStepOutcome {
                delay_s: o.delay_s,
                sleep_s: o.sleep_s,
                rebuffer_s: o.rebuffer_s,
                buffer_s: o.buffer_after_s,
                chunk_bytes: o.chunk_bytes,
                prev_level: o.prev_level,
                done: o.done,
            };
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn abr_sim_is_done(sim: *const AbrSimulator, done: *mut bool) -> AbrStatus {
    guard(|| {
        *obj_mut(done, "done")? = obj(sim, "sim")?.0.is_done();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn abr_sim_snapshot(sim: *const AbrSimulator, out: *mut *mut AbrSnapshot) -> AbrStatus {
    guard(|| put(out, AbrSnapshot(obj(sim, "sim")?.0.snapshot())))
}

/// Rewinds `sim` to `snapshot`. The snapshot stays valid and reusable.
#[no_mangle]
pub unsafe extern "C" fn abr_sim_restore(sim: *mut AbrSimulator, snapshot: *const AbrSnapshot) -> AbrStatus {
    guard(|| {
        let snap = obj(snapshot, "snapshot")?;
        obj_mut(sim, "sim")?.0.restore(&snap.0);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn abr_snapshot_free(snapshot: *mut AbrSnapshot) {
    free(snapshot)
}

#[no_mangle]
pub unsafe extern "C" fn abr_sim_free(sim: *mut AbrSimulator) {
    free(sim)
}

// ---- learned policy -----------------------------------------------------

pub struct AbrModel(Mlp);

#[no_mangle]
pub unsafe extern "C" fn abr_model_load(file: *const c_char, out: *mut *mut AbrModel) -> AbrStatus {
    guard(|| {
        let (m, _) = Mlp::load(path(file)?)?;
        if m.arch() != [OBS_DIM, abr_core::mlp::HIDDEN, abr_core::mlp::HIDDEN, N_LEVELS] {
            return Err(Fail(AbrStatus::DataError, format!("not an actor model: arch {:?}", m.arch())));
        }
        put(out, AbrModel(m))
    })
}

/// Action distribution for one observation. `probs` (length
/// `ABR_N_LEVELS`) may be NULL; `action` receives the most likely level.
#[no_mangle]
pub unsafe extern "C" fn abr_model_act(
    model: *const AbrModel,
    obs: *const f64,
    obs_len: usize,
    probs: *mut f64,
    action: *mut usize,
) -> AbrStatus {
    guard(|| {
        let m = obj(model, "model")?;
        if obs_len != OBS_DIM {
            return Err(invalid(format!("observation has {obs_len} entries, expected {OBS_DIM}")));
        }
        let x = slice(obs, obs_len, "obs")?;
        let (p, _) = actor_forward(&m.0, x)?;
        if !probs.is_null() {
            std::slice::from_raw_parts_mut(probs, N_LEVELS).copy_from_slice(&p);
        }
        *obj_mut(action, "action")? = argmax(&p);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn abr_model_free(model: *mut AbrModel) {
    free(model)
}

// ---- controllers --------------------------------------------------------

pub struct AbrController(Box<dyn AbrPolicy>);

/// Creates a rule-based controller (`bb`, `bola`, `robustmpc`, `quetra`) or
/// the lookahead expert (`oracle`, horizon 5, 5000 beams). `mu` is the
/// rebuffering penalty used by planners.
#[no_mangle]
pub unsafe extern "C" fn abr_controller_new(name: *const c_char, mu: f64, out: *mut *mut AbrController) -> AbrStatus {
    guard(|| {
        let name = CStr::from_ptr(obj(name, "name")?).to_str().map_err(|_| invalid("name is not UTF-8"))?;
        if !(mu.is_finite() && mu > 0.0) {
            return Err(invalid(format!("mu must be positive, got {mu}")));
        }
        let qoe = QoeConfig::new(mu);
        let policy: Box<dyn AbrPolicy> = match name {
            "oracle" => Box::new(Oracle { cfg: ExpertConfig::default(), qoe }),
            other => controller_by_name(other, qoe)?,
        };
        put(out, AbrController(policy))
    })
}

/// Clears per-episode state; call before each new episode.
#[no_mangle]
pub unsafe extern "C" fn abr_controller_reset(ctrl: *mut AbrController) -> AbrStatus {
    guard(|| {
        obj_mut(ctrl, "controller")?.0.reset();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn abr_controller_select(
    ctrl: *mut AbrController,
    sim: *const AbrSimulator,
    level: *mut usize,
) -> AbrStatus {
    guard(|| {
        let l = obj_mut(ctrl, "controller")?.0.select(&obj(sim, "sim")?.0)?;
        *obj_mut(level, "level")? = l;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn abr_controller_free(ctrl: *mut AbrController) {
    free(ctrl)
}

/// Beam-search expert decision for the simulator's next chunk.
#[no_mangle]
pub unsafe extern "C" fn abr_expert_select(
    sim: *const AbrSimulator,
    horizon: usize,
    max_beams: usize,
    mu: f64,
    level: *mut usize,
) -> AbrStatus {
    guard(|| {
        let cfg = ExpertConfig { horizon, max_beams };
        let l = beam_search(&obj(sim, "sim")?.0, &cfg, &QoeConfig::new(mu))?;
        *obj_mut(level, "level")? = l;
        Ok(())
    })
}

// ---- metrics ------------------------------------------------------------

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AbrQoe {
    pub total: f64,
    pub quality_sum: f64,
    pub smoothness_penalty: f64,
    pub rebuffer_penalty: f64,
}

/// Episode QoE from per-chunk levels and stall times.
#[no_mangle]
pub unsafe extern "C" fn abr_episode_qoe(
    levels: *const usize,
    rebuffer_s: *const f64,
    n_chunks: usize,
    ladder_kbps: *const u32,
    n_levels: usize,
    mu: f64,
    out: *mut AbrQoe,
) -> AbrStatus {
    guard(|| {
        let lv = slice(levels, n_chunks, "levels")?;
        let rb = slice(rebuffer_s, n_chunks, "rebuffer_s")?;
        let ladder = slice(ladder_kbps, n_levels, "ladder_kbps")?;
        let records = lv
            .iter()
            .zip(rb)
            .map(|(&level, &rebuffer_s)| {
                let bitrate_kbps = *ladder.get(level).ok_or_else(|| invalid(format!("level {level} out of range")))?;
                Ok(ChunkRecord { level, bitrate_kbps, rebuffer_s })
            })
            .collect::<Result<Vec<_>, Fail>>()?;
        let s = episode_qoe(&records, &QoeConfig::new(mu))?;
        *obj_mut(out, "out")? = AbrQoe {
            total: s.total,
            quality_sum: s.quality_sum,
            smoothness_penalty: s.smoothness_penalty,
            rebuffer_penalty: s.rebuffer_penalty,
        };
        Ok(())
    })
}

/// Average rank per algorithm from a row-major `n_algorithms x n_sets`
/// matrix of mean QoE values (ties share the mean of their positions).
/// Writes `n_algorithms` unrounded values to `ave_rank`.
#[no_mangle]
pub unsafe extern "C" fn abr_average_rank(
    qoe: *const f64,
    n_algorithms: usize,
    n_sets: usize,
    ave_rank: *mut f64,
) -> AbrStatus {
    guard(|| {
        let cells = n_algorithms.checked_mul(n_sets).ok_or_else(|| invalid("matrix too large"))?;
        let v = slice(qoe, cells, "qoe")?;
        let table = QoeTable {
            algorithms: (0..n_algorithms).map(|i| i.to_string()).collect(),
            trace_sets: (0..n_sets).map(|j| j.to_string()).collect(),
            values: v.chunks(n_sets.max(1)).map(<[f64]>::to_vec).collect(),
        };
        let report = average_rank(&table)?;
        obj_mut(ave_rank, "ave_rank")?;
        std::slice::from_raw_parts_mut(ave_rank, n_algorithms).copy_from_slice(&report.ave_rank);
        Ok(())
    })
}
