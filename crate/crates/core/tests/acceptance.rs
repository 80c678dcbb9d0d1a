//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run a subset with `cargo test --test acceptance -- 3 5`.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use abr_core::expert::{beam_search, ExpertConfig};
use abr_core::harness::{evaluate, write_synth_fixtures, PolicyController};
use abr_core::mlp::{actor_forward, argmax, log_softmax, softmax, Mlp, ModelMeta};
use abr_core::qoe::{average_rank, read_qoe_table, round1, step_reward, QoeConfig};
use abr_core::sim::{Observation, SimConfig, Simulator, StartPosition, OBS_DIM};
use abr_core::trace::{load_manifest, trace_stats, Role, Trace};
use abr_core::train::{
    compute_gae, dpo_step_loss, ppo_loss, run_bc_pretraining, run_rl_finetune, AbrEnv, PpoConfig, PpoSample,
    PreferenceSample, TrainConfig,
};
use abr_core::video::{load_video, synth_video, VideoManifest};
use abr_core::{LADDER_3G, N_LEVELS};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

// ---------------------------------------------------------------- 1

fn rank_tables() -> Check {
    let start = Instant::now();
    let tables: [(&str, &[(&str, f64)]); 3] = [
        (
            "table_iv.csv",
            &[
                ("BC+PPO", 1.8),
                ("RobustMPC", 3.4),
                ("Pensieve", 3.8),
                ("QUETRA", 4.4),
                ("NetLLM", 4.6),
                ("Comyco", 4.8),
                ("BOLA", 6.0),
                ("BB", 7.2),
            ],
        ),
        (
            "table_v.csv",
            &[
                ("BB", 5.0),
                ("BOLA", 5.0),
                ("QUETRA", 7.7),
                ("RobustMPC", 3.0),
                ("Pensieve", 5.0),
                ("Comyco", 2.0),
                ("NetLLM", 6.7),
                ("BC+PPO", 1.7),
            ],
        ),
        (
            "table_vi.csv",
            &[
                ("BB", 4.3),
                ("BOLA", 5.0),
                ("QUETRA", 7.0),
                ("RobustMPC", 4.0),
                ("Pensieve", 4.7),
                ("Comyco", 3.7),
                ("NetLLM", 5.3),
                ("BC+PPO", 2.0),
            ],
        ),
    ];
    for (file, expected) in tables {
        let f = std::fs::File::open(data(file)).map_err(|e| e.to_string())?;
        let table = read_qoe_table(f).map_err(|e| e.to_string())?;
        let report = average_rank(&table).map_err(|e| e.to_string())?;
        for &(alg, want) in expected {
            let got = report.ave_rank_of(alg).ok_or(format!("{file}: {alg} missing"))?;
            ensure(round1(got) == want, format!("{file}: {alg} ave rank {} != {want}", round1(got)))?;
        }
    }
    let dt = start.elapsed();
    ensure(dt < Duration::from_secs(1), format!("took {dt:?}"))?;
    Ok(format!("3 tables, 24 ranks exact, {dt:?}"))
}

// ---------------------------------------------------------------- 2

fn random_obs(rng: &mut ChaCha8Rng) -> Observation {
    let mut o = [0.0; OBS_DIM];
    o.iter_mut().for_each(|v| *v = rng.gen_range(-1.5..1.5));
    Observation(o)
}

fn random_prefs(rng: &mut ChaCha8Rng, n: usize) -> Vec<PreferenceSample> {
    (0..n)
        .map(|_| {
            let preferred = rng.gen_range(0..N_LEVELS);
            let rejected = (preferred + rng.gen_range(1..N_LEVELS)) % N_LEVELS;
            PreferenceSample { obs: random_obs(rng), preferred, rejected }
        })
        .collect()
}

fn perturb(net: &Mlp, rng: &mut ChaCha8Rng, scale: f64) -> Mlp {
    let mut out = net.clone();
    out.params_mut().iter_mut().for_each(|p| *p += rng.gen_range(-scale..scale));
    out
}

fn dpo_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let theta = Mlp::actor(i);
        let n = rng.gen_range(1..64);
        let batch = random_prefs(&mut rng, n);
        let beta = if i % 10 == 0 { 0.0 } else { rng.gen_range(0.0..20.0) };
        let (loss, _) = dpo_step_loss(&batch, &theta, &theta, beta).map_err(|e| e.to_string())?;
        worst = worst.max((loss - std::f64::consts::LN_2).abs());

        let moved = perturb(&theta, &mut rng, 0.3);
        let (_, grad) = dpo_step_loss(&batch, &moved, &theta, 0.0).map_err(|e| e.to_string())?;
        ensure(grad.iter().all(|&g| g == 0.0), format!("batch {i}: nonzero gradient at beta = 0"))?;
    }
    ensure(worst < 1e-9, format!("max |loss - ln 2| = {worst:e}"))?;
    Ok(format!("100 batches, max |loss - ln 2| = {worst:.1e}, beta = 0 gradients exactly 0"))
}

// ---------------------------------------------------------------- 3

const FD_H: f64 = 1e-5;

fn rel_err(fd: f64, an: f64) -> f64 {
    (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6)
}

/// Max relative error of `grad` against central differences of `f` on
/// `coords` random parameters of `net`.
fn fd_check(net: &Mlp, grad: &[f64], rng: &mut ChaCha8Rng, coords: usize, f: impl Fn(&Mlp) -> f64) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..coords {
        let k = rng.gen_range(0..net.params().len());
        let mut plus = net.clone();
        plus.params_mut()[k] += FD_H;
        let mut minus = net.clone();
        minus.params_mut()[k] -= FD_H;
        let fd = (f(&plus) - f(&minus)) / (2.0 * FD_H);
        worst = worst.max(rel_err(fd, grad[k]));
    }
    worst
}

fn gradient_fidelity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut dpo, mut ppo_a, mut ppo_c, mut logp, mut mse) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let cfg = PpoConfig { c1: 0.5, c2: 0.1, ..PpoConfig::default() };
    for input in 0..20u64 {
        let reference = Mlp::actor(100 + input);
        let theta = perturb(&reference, &mut rng, 0.2);
        let critic = Mlp::critic(200 + input);

        let batch = random_prefs(&mut rng, 8);
        let beta = rng.gen_range(0.05..2.0);
        let (_, g) = dpo_step_loss(&batch, &theta, &reference, beta).map_err(|e| e.to_string())?;
        dpo = dpo.max(fd_check(&theta, &g, &mut rng, 10, |t| dpo_step_loss(&batch, t, &reference, beta).unwrap().0));

        let samples: Vec<PpoSample> = (0..8)
            .map(|_| {
                let obs = random_obs(&mut rng);
                let action = rng.gen_range(0..N_LEVELS);
                let lp = log_softmax(&theta.forward(obs.as_slice()).out)[action];
                PpoSample {
                    obs,
                    action,
                    old_log_prob: lp + rng.gen_range(-0.4..0.4),
                    advantage: rng.gen_range(-2.0..2.0),
                    target: rng.gen_range(-3.0..3.0),
                }
            })
            .collect();
        let out = ppo_loss(&samples, &theta, &critic, &cfg).map_err(|e| e.to_string())?;
        ppo_a = ppo_a.max(fd_check(&theta, &out.grad_actor, &mut rng, 10, |t| {
            ppo_loss(&samples, t, &critic, &cfg).unwrap().loss
        }));
        ppo_c = ppo_c.max(fd_check(&critic, &out.grad_critic, &mut rng, 10, |c| {
            ppo_loss(&samples, &theta, c, &cfg).unwrap().loss
        }));

        let obs = random_obs(&mut rng);
        let a = rng.gen_range(0..N_LEVELS);
        let p = softmax(&theta.forward(obs.as_slice()).out);
        let up: Vec<f64> = (0..N_LEVELS).map(|j| f64::from(u8::from(j == a)) - p[j]).collect();
        let g = theta.backward(&[obs.as_slice()], &[up]).map_err(|e| e.to_string())?;
        logp = logp.max(fd_check(&theta, &g, &mut rng, 10, |t| log_softmax(&t.forward(obs.as_slice()).out)[a]));

        let y = rng.gen_range(-3.0..3.0);
        let v = critic.forward(obs.as_slice()).out[0];
        let g = critic.backward(&[obs.as_slice()], &[vec![2.0 * (v - y)]]).map_err(|e| e.to_string())?;
        mse = mse.max(fd_check(&critic, &g, &mut rng, 10, |c| (c.forward(obs.as_slice()).out[0] - y).powi(2)));
    }
    let worst = dpo.max(ppo_a).max(ppo_c).max(logp).max(mse);
    let detail = format!(
        "max rel err: dpo {dpo:.1e}, ppo actor {ppo_a:.1e}, ppo critic {ppo_c:.1e}, log-prob {logp:.1e}, mse {mse:.1e}"
    );
    ensure(worst < 1e-4, detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- 4

fn gae_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=32);
        let gamma = rng.gen_range(0.0..1.0);
        let lambda = rng.gen_range(0.0..1.0);
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let nv: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let d: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.2)).collect();
        let (adv, targets) = compute_gae(&r, &v, &nv, &d, gamma, lambda).map_err(|e| e.to_string())?;
        let delta: Vec<f64> =
            (0..n).map(|t| r[t] + if d[t] { 0.0 } else { gamma * nv[t] } - v[t]).collect();
        for t in 0..n {
            let mut direct = 0.0;
            let mut w = 1.0;
            for k in t..n {
                direct += w * delta[k];
                if d[k] {
                    break;
                }
                w *= gamma * lambda;
            }
            worst = worst.max((adv[t] - direct).abs());
            worst = worst.max((targets[t] - v[t] - adv[t]).abs());
        }
    }
    ensure(worst < 1e-9, format!("max deviation {worst:e}"))?;
    Ok(format!("1000 sequences, max deviation {worst:.1e}"))
}

// ---------------------------------------------------------------- 5

fn random_trace(rng: &mut ChaCha8Rng, id: &str) -> Arc<Trace> {
    let n = rng.gen_range(2..60);
    let mut pairs = Vec::with_capacity(n + 1);
    let mut t = 0.0;
    for i in 0..n {
        let bw = if i > 0 && rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.05..8.0) };
        pairs.push((t, bw));
        t += rng.gen_range(0.05..5.0);
    }
    pairs.push((t, 1.0));
    Arc::new(Trace::from_pairs(id, &pairs).unwrap())
}

fn simulator_analytics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = SimConfig::default();
    let video = Arc::new(synth_video(&LADDER_3G, 49, 0.1, 5).unwrap());

    let mut worst_delay = 0.0f64;
    for bw in [0.2, 1.0, 3.7, 12.0, 100.0] {
        let trace = Arc::new(Trace::from_pairs("c", &[(0.0, bw), (7.0, bw)]).unwrap());
        let (mut sim, _) = Simulator::reset(trace, video.clone(), cfg.clone(), StartPosition::RandomOffset(9)).unwrap();
        while !sim.is_done() {
            let level = rng.gen_range(0..N_LEVELS);
            let out = sim.advance(level).map_err(|e| e.to_string())?;
            let closed = out.chunk_bytes as f64 * 8.0 / (bw * 1e6 * 0.95) + 0.08;
            worst_delay = worst_delay.max((out.delay_s - closed).abs());
        }
    }
    ensure(worst_delay < 1e-6, format!("delay closed form off by {worst_delay:e}"))?;

    let mut steps = 0;
    let mut worst_buf = 0.0f64;
    let mut worst_clock = 0.0f64;
    while steps < 100_000 {
        let trace = random_trace(&mut rng, "r");
        let (mut sim, _) =
            Simulator::reset(trace, video.clone(), cfg.clone(), StartPosition::RandomOffset(rng.gen())).unwrap();
        while !sim.is_done() {
            let before = sim.state().elapsed_s();
            let out = sim.advance(rng.gen_range(0..N_LEVELS)).map_err(|e| e.to_string())?;
            let expect = (out.buffer_before_s - out.delay_s).max(0.0) + 4.0 - out.sleep_s;
            worst_buf = worst_buf.max((out.buffer_after_s - expect).abs());
            worst_buf = worst_buf.max((out.rebuffer_s - (out.delay_s - out.buffer_before_s).max(0.0)).abs());
            ensure(out.buffer_after_s <= 60.0 + 1e-9 && out.buffer_after_s >= 0.0, "buffer out of range")?;
            worst_clock = worst_clock.max((sim.state().elapsed_s() - before - out.delay_s - out.sleep_s).abs());
            steps += 1;
        }
    }
    ensure(worst_buf < 1e-9, format!("buffer recurrence off by {worst_buf:e}"))?;
    ensure(worst_clock < 1e-9, format!("wall clock off by {worst_clock:e}"))?;

    for probe in 0..1000 {
        let trace = random_trace(&mut rng, "p");
        let (mut sim, _) =
            Simulator::reset(trace, video.clone(), cfg.clone(), StartPosition::RandomOffset(rng.gen())).unwrap();
        for _ in 0..rng.gen_range(0..40) {
            sim.advance(rng.gen_range(0..N_LEVELS)).unwrap();
        }
        let snap = sim.snapshot();
        let actions: Vec<usize> = (0..sim.chunks_remaining()).map(|_| rng.gen_range(0..N_LEVELS)).collect();
        let first: Vec<_> = actions.iter().map(|&a| sim.step(a).unwrap()).collect();
        sim.restore(&snap);
        let second: Vec<_> = actions.iter().map(|&a| sim.step(a).unwrap()).collect();
        ensure(first == second, format!("probe {probe}: replay diverged"))?;
    }
    Ok(format!(
        "delay err {worst_delay:.1e}; {steps} steps, buffer err {worst_buf:.1e}, clock err {worst_clock:.1e}; 1000 replays equal"
    ))
}

// ---------------------------------------------------------------- 6

/// Plain recursive enumeration in lexicographic order; strict improvement
/// keeps the lexicographically smallest among equal scores.
fn exhaustive(sim: &Simulator, depth: usize, qoe: &QoeConfig) -> usize {
    fn rec(sim: &Simulator, depth: usize, acc: f64, qoe: &QoeConfig, seq: &mut Vec<usize>, best: &mut (f64, Vec<usize>)) {
        if depth == 0 || sim.is_done() {
            if acc > best.0 {
                *best = (acc, seq.clone());
            }
            return;
        }
        let ladder = sim.video().ladder_kbps().to_vec();
        for l in 0..ladder.len() {
            let mut child = sim.clone();
            let out = child.advance(l).unwrap();
            seq.push(l);
            rec(&child, depth - 1, acc + step_reward(&ladder, out.prev_level, l, out.rebuffer_s, qoe), qoe, seq, best);
            seq.pop();
        }
    }
    let mut best = (f64::NEG_INFINITY, Vec::new());
    rec(sim, depth, 0.0, qoe, &mut Vec::new(), &mut best);
    best.1[0]
}

fn expert_equivalence() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let qoe = QoeConfig::new(4.3);
    let video = Arc::new(synth_video(&LADDER_3G, 49, 0.15, 6).unwrap());
    let mut checked = 0;
    for snap in 0..50 {
        let trace = random_trace(&mut rng, "e");
        let (mut sim, _) =
            Simulator::reset(trace, video.clone(), SimConfig::default(), StartPosition::RandomOffset(rng.gen())).unwrap();
        for _ in 0..rng.gen_range(0..48) {
            sim.advance(rng.gen_range(0..N_LEVELS)).unwrap();
        }
        for l in 1..=3 {
            let cfg = ExpertConfig { horizon: l, max_beams: 6usize.pow(l as u32) };
            let got = beam_search(&sim, &cfg, &qoe).map_err(|e| e.to_string())?;
            let want = exhaustive(&sim, l, &qoe);
            ensure(got == want, format!("snapshot {snap}, L = {l}: beam {got} vs exhaustive {want}"))?;
            checked += 1;
        }
    }
    let dt = start.elapsed();
    ensure(dt < Duration::from_secs(60), format!("took {dt:?}"))?;
    Ok(format!("{checked} (snapshot, L) pairs match, {dt:?}"))
}

// ---------------------------------------------------------------- 7

struct Fixture {
    _dir: tempfile::TempDir,
    train: Vec<Arc<Trace>>,
    test: Vec<Arc<Trace>>,
    test_set: abr_core::trace::TraceSet,
    video: Arc<VideoManifest>,
    qoe: QoeConfig,
}

fn fixture() -> Result<Fixture, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let m = write_synth_fixtures(dir.path(), 7).map_err(|e| e.to_string())?;
    let bench = load_manifest(&m).map_err(|e| e.to_string())?;
    let video = Arc::new(load_video(&dir.path().join("video.txt")).map_err(|e| e.to_string())?);
    let arcs = |ts: &[Trace]| ts.iter().cloned().map(Arc::new).collect::<Vec<_>>();
    Ok(Fixture {
        train: arcs(&bench.train.traces),
        test: arcs(&bench.test[0].traces),
        test_set: bench.test[0].clone(),
        video,
        qoe: QoeConfig::new(bench.mu),
        _dir: dir,
    })
}

fn model_bytes(m: &Mlp, stage: &str) -> Vec<u8> {
    serde_json::to_vec(&m.to_model_file(ModelMeta { seed: 7, stage: stage.into() })).unwrap()
}

fn training_smoke() -> Check {
    let start = Instant::now();
    let fx = fixture()?;
    let cfg = TrainConfig {
        seed: 7,
        qoe: fx.qoe,
        ppo: PpoConfig { iterations: 30, ..PpoConfig::default() },
        ..TrainConfig::default()
    };
    let train_once = || -> Result<(Mlp, Mlp), String> {
        let base = run_bc_pretraining(&fx.train, fx.video.clone(), &cfg, &mut |_| {}).map_err(|e| e.to_string())?;
        let tuned = run_rl_finetune(&base, &fx.train, fx.video.clone(), &cfg, &mut |_| {}).map_err(|e| e.to_string())?;
        Ok((base, tuned.actor))
    };
    let (base, tuned) = train_once()?;

    // (a) agreement with the expert on states the base policy visits on held-out traces
    let mut env = AbrEnv::new(fx.test.clone(), fx.video.clone(), cfg.sim.clone(), fx.qoe, 77).map_err(|e| e.to_string())?;
    let mut agree = 0;
    for _ in 0..500 {
        let obs = *env.observation();
        let expert = beam_search(env.simulator(), &cfg.expert, &fx.qoe).map_err(|e| e.to_string())?;
        let a = argmax(&actor_forward(&base, obs.as_slice()).map_err(|e| e.to_string())?.0);
        agree += usize::from(a == expert);
        env.step(a).map_err(|e| e.to_string())?;
    }
    let agreement = agree as f64 / 500.0;

    // (b) greedy evaluation on the test split, deterministic starts
    let reward_of = |m: &Mlp| -> Result<f64, String> {
        let make = || Ok(Box::new(PolicyController::new(m.clone(), true, 0)) as _);
        Ok(evaluate(make, &fx.test_set, &fx.video, &cfg.sim, &fx.qoe).map_err(|e| e.to_string())?.mean_reward())
    };
    let (r_base, r_tuned) = (reward_of(&base)?, reward_of(&tuned)?);

    // (c) full rerun
    let (base2, tuned2) = train_once()?;
    let identical = model_bytes(&base, "bc") == model_bytes(&base2, "bc")
        && model_bytes(&tuned, "rl") == model_bytes(&tuned2, "rl");

    let dt = start.elapsed();
    let detail = format!(
        "(a) agreement {:.1}% (b) test reward base {r_base:.2} vs fine-tuned {r_tuned:.2} (c) identical reruns: {identical}; {:.0?}",
        agreement * 100.0,
        dt
    );
    ensure(agreement >= 0.9 && r_tuned >= r_base && identical && dt < Duration::from_secs(1800), detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- 8

fn hyperparameters() -> Check {
    let c = TrainConfig::default();
    let d = &c.dpo;
    ensure(
        (d.iterations, d.epochs, d.rollout_steps, d.minibatch, d.lr, d.beta) == (15, 5, 2000, 128, 3e-4, 0.1),
        format!("pretraining config {d:?}"),
    )?;
    let p = &c.ppo;
    ensure(
        (p.iterations, p.epochs, p.rollout_steps, p.minibatch) == (244, 10, 512, 64)
            && (p.lr, p.clip, p.gamma, p.lambda, p.c1, p.c2) == (3e-4, 0.2, 0.99, 0.95, 0.5, 0.0)
            && p.n_envs == 4,
        format!("fine-tuning config {p:?}"),
    )?;
    ensure((c.expert.horizon, c.expert.max_beams) == (5, 5000), format!("expert config {:?}", c.expert))?;
    ensure(p.total_env_steps() == 499_712, format!("total env steps {}", p.total_env_steps()))?;

    // the CLI's dump must agree field for field
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let m = write_synth_fixtures(dir.path(), 1).map_err(|e| e.to_string())?;
    let out = Command::new(env!("CARGO_BIN_EXE_abr"))
        .args(["train-bc", "--dump-config", "--out", "unused.json", "--manifest"])
        .arg(&m)
        .env_remove("ABR_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), String::from_utf8_lossy(&out.stderr).into_owned())?;
    let dumped: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let want = serde_json::json!({
        "dpo": { "beta": 0.1, "iterations": 15, "epochs": 5, "rollout_steps": 2000, "minibatch": 128, "lr": 3e-4 },
        "expert": { "horizon": 5, "max_beams": 5000 },
    });
    for key in ["dpo", "expert"] {
        ensure(dumped[key] == want[key], format!("dumped {key}: {}", dumped[key]))?;
    }
    for (k, v) in [
        ("iterations", 244.0),
        ("epochs", 10.0),
        ("rollout_steps", 512.0),
        ("minibatch", 64.0),
        ("lr", 3e-4),
        ("clip", 0.2),
        ("gamma", 0.99),
        ("lambda", 0.95),
        ("c1", 0.5),
        ("c2", 0.0),
        ("n_envs", 4.0),
    ] {
        ensure(dumped["ppo"][k].as_f64() == Some(v), format!("dumped ppo.{k} = {}", dumped["ppo"][k]))?;
    }
    Ok("defaults and CLI dump match; total PPO env steps 499712".into())
}

// ---------------------------------------------------------------- 9

type SetRow = (&'static str, usize, &'static str, &'static str);

const BENCH_3G: &[SetRow] = &[
    ("train", 1828, "0.00", "45.38"),
    ("FCC-16", 69, "0.00", "8.95"),
    ("FCC-18", 100, "0.00", "41.76"),
    ("Oboe", 100, "0.16", "9.01"),
    ("Puffer-21", 100, "0.00", "25.14"),
    ("Puffer-22", 100, "0.00", "9.29"),
    ("HSR", 34, "0.00", "44.68"),
];

const BENCH_4G: &[SetRow] = &[
    ("train", 262, "0.00", "1890.00"),
    ("Lumos 4G", 53, "0.00", "270.00"),
    ("Lumos 5G", 37, "0.00", "1920.00"),
    ("Solis Wi-Fi", 24, "0.00", "124.00"),
    ("Ghent", 40, "0.00", "110.97"),
    ("Lab", 61, "0.16", "175.91"),
];

fn check_bench(manifest: &Path, rows: &[SetRow]) -> Result<usize, String> {
    let bench = load_manifest(manifest).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for &(name, count, lo, hi) in rows {
        let set = if name == "train" {
            bench.group(Role::Train)[0]
        } else {
            *bench
                .group(Role::Test)
                .iter()
                .chain(bench.group(Role::Ood).iter())
                .find(|s| s.name.eq_ignore_ascii_case(name))
                .ok_or(format!("{}: no set named {name}", manifest.display()))?
        };
        let s = trace_stats(set).map_err(|e| e.to_string())?;
        let got = (s.count, format!("{:.2}", s.min_bw), format!("{:.2}", s.max_bw));
        ensure(got == (count, lo.to_string(), hi.to_string()), format!("{name}: got {got:?}, want ({count}, {lo}, {hi})"))?;
        checked += 1;
    }
    Ok(checked)
}

/// `Ok(None)` means skipped.
fn trace_statistics() -> Result<Option<String>, String> {
    let mut done = Vec::new();
    for (var, rows) in [("ABR_BENCH_3G_MANIFEST", BENCH_3G), ("ABR_BENCH_4G_MANIFEST", BENCH_4G)] {
        if let Ok(path) = std::env::var(var) {
            let n = check_bench(Path::new(&path), rows)?;
            done.push(format!("{var}: {n} sets match"));
        }
    }
    Ok((!done.is_empty()).then(|| done.join("; ")))
}

// ----------------------------------------------------------------

type Criterion = (&'static str, &'static str, fn() -> Check);

fn main() {
    let selected: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let want = |n: &str| selected.is_empty() || selected.iter().any(|s| s == n);
    let criteria: [Criterion; 8] = [
        ("1", "rank protocol", rank_tables),
        ("2", "preference-loss identity", dpo_identity),
        ("3", "gradient fidelity", gradient_fidelity),
        ("4", "GAE oracle", gae_oracle),
        ("5", "simulator analytics", simulator_analytics),
        ("6", "expert equivalence", expert_equivalence),
        ("7", "training smoke", training_smoke),
        ("8", "hyperparameter conformance", hyperparameters),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !want(id) {
            continue;
        }
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("criterion {id} ({name}): PASS: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id} ({name}): FAIL: {detail}");
            }
        }
    }
    if want("9") {
        match std::panic::catch_unwind(trace_statistics).unwrap_or_else(|_| Err("panicked".into())) {
            Ok(Some(detail)) => println!("criterion 9 (trace statistics): PASS: {detail}"),
            Ok(None) => println!(
                "criterion 9 (trace statistics): SKIP: set ABR_BENCH_3G_MANIFEST / ABR_BENCH_4G_MANIFEST to run"
            ),
            Err(detail) => {
                failed += 1;
                println!("criterion 9 (trace statistics): FAIL: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
