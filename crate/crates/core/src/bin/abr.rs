use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;
use serde_json::json;

use abr_core::error::{Error, Result};
use abr_core::expert::ExpertConfig;
use abr_core::harness::{
    evaluate, make_policy, write_rows, write_synth_fixtures, Algorithm, EvalReport, RunConfig, RunRecord,
};
use abr_core::mlp::{Mlp, ModelMeta};
use abr_core::qoe::{average_rank, read_qoe_table, QoeConfig};
use abr_core::trace::{load_manifest, trace_stats, BenchmarkManifest, Role, Trace, TraceSet};
use abr_core::train::{run_bc_pretraining, run_rl_finetune, TrainConfig, TrainEvent};
use abr_core::video::{load_video, VideoManifest};

#[derive(Parser)]
#[command(name = "abr", version, about = "Trace-driven ABR simulation, training and evaluation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Preference-based imitation pretraining; writes the base model.
    TrainBc(TrainArgs),
    /// PPO fine-tuning of a base model.
    TrainRl {
        #[command(flatten)]
        train: TrainArgs,
        /// Base model from train-bc.
        #[arg(long)]
        base: PathBuf,
    },
    /// Evaluate an algorithm on every trace set of a manifest group.
    Eval(EvalArgs),
    /// Average rank from a QoE CSV (per-trace results or an algorithms x sets table).
    Rank {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count and bandwidth range of each trace set.
    TraceStats {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Write a small synthetic benchmark (traces, video, manifest).
    SynthFixtures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Chunk-size file; defaults to video.txt next to the manifest.
    #[arg(long)]
    video: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Seed; falls back to ABR_SEED, then the config file.
    #[arg(long, env = "ABR_SEED")]
    seed: Option<u64>,
    /// JSON training config; missing fields take the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the number of iterations of this stage.
    #[arg(long)]
    iterations: Option<usize>,
    /// Write the full training config to stdout and exit.
    #[arg(long)]
    dump_config: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    algo: String,
    /// Trained model; repeat to average over independently trained models.
    #[arg(long = "model")]
    models: Vec<PathBuf>,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    video: Option<PathBuf>,
    /// train, test or ood.
    #[arg(long, default_value = "test")]
    group: String,
    #[arg(long)]
    out: PathBuf,
    /// Seeds for sampled (non-greedy) action selection, one per model run.
    #[arg(long = "seed", env = "ABR_SEED", value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Sample actions from the policy instead of taking the argmax.
    #[arg(long)]
    sample: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::TrainBc(args) => train(args, None),
        Cmd::TrainRl { train: args, base } => train(args, Some(base)),
        Cmd::Eval(args) => eval(args),
        Cmd::Rank { input, out } => rank(&input, &out),
        Cmd::TraceStats { manifest, json } => stats(&manifest, json),
        Cmd::SynthFixtures { out, seed } => {
            let m = write_synth_fixtures(&out, seed)?;
            RunRecord::new("synth-fixtures", Some(seed), json!({ "out": out })).write(&out.join("config.json"))?;
            println!("{}", m.display());
            Ok(())
        }
    }
}

fn load_bench(manifest: &Path, video: Option<&Path>) -> Result<(BenchmarkManifest, Arc<VideoManifest>, PathBuf)> {
    let bench = load_manifest(manifest)?;
    let vpath = match video {
        Some(v) => v.to_path_buf(),
        None => manifest.parent().unwrap_or(Path::new(".")).join("video.txt"),
    };
    let video = load_video(&vpath)?;
    if video.ladder_kbps() != bench.ladder_kbps.as_slice() {
        return Err(Error::Config(format!(
            "video ladder {:?} does not match manifest ladder {:?}",
            video.ladder_kbps(),
            bench.ladder_kbps
        )));
    }
    Ok((bench, Arc::new(video), vpath))
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    out.with_file_name(format!("{stem}.{suffix}"))
}

#[derive(Serialize)]
struct TrainRecord<'a> {
    manifest: &'a Path,
    video: &'a Path,
    base: Option<&'a Path>,
    train: &'a TrainConfig,
}

fn train(args: TrainArgs, base: Option<PathBuf>) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<TrainConfig>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.iterations {
        match base {
            None => cfg.dpo.iterations = n,
            Some(_) => cfg.ppo.iterations = n,
        }
    }
    let (bench, video, vpath) = load_bench(&args.manifest, args.video.as_deref())?;
    cfg.qoe = QoeConfig::new(bench.mu);
    if args.dump_config {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let traces: Vec<Arc<Trace>> = bench.train.traces.iter().cloned().map(Arc::new).collect();

    let log_path = sibling(&args.out, "log.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| Error::io(&log_path, e))?);
    let mut io_err: Option<Error> = None;
    let stage = if base.is_some() { "rl" } else { "bc" };
    let mut sink = |e: &TrainEvent<'_>| {
        let line = match e {
            TrainEvent::BcIteration { iteration, buffer_len, mean_loss, mean_episode_reward } => {
                info!("bc iteration {iteration}: buffer {buffer_len}, loss {mean_loss:.5}");
                json!({ "stage": "bc", "iteration": iteration, "buffer_len": buffer_len,
                        "mean_loss": mean_loss, "mean_episode_reward": mean_episode_reward })
            }
            TrainEvent::PpoIteration {
                iteration,
                buffer_len_at_start,
                transitions,
                mean_episode_reward,
                actor_loss,
                value_loss,
                entropy,
                first_minibatch_max_ratio_dev,
            } => {
                info!("rl iteration {iteration}: reward {mean_episode_reward:?}, value loss {value_loss:.4}");
                json!({ "stage": "rl", "iteration": iteration, "buffer_len_at_start": buffer_len_at_start,
                        "transitions": transitions, "mean_episode_reward": mean_episode_reward,
                        "actor_loss": actor_loss, "value_loss": value_loss, "entropy": entropy,
                        "first_minibatch_max_ratio_dev": first_minibatch_max_ratio_dev })
            }
            TrainEvent::Checkpoint { stage, iteration, actor } => {
                let path = sibling(&args.out, &format!("{stage}-iter{iteration:04}.json"));
                if let Err(err) = actor.save(&path, ModelMeta { seed: cfg.seed, stage: stage.to_string() }) {
                    io_err.get_or_insert(err);
                }
                json!({ "stage": stage, "checkpoint": path, "iteration": iteration })
            }
        };
        if let Err(err) = writeln!(log, "{line}") {
            io_err.get_or_insert(Error::io(&log_path, err));
        }
    };

    let actor = match &base {
        None => run_bc_pretraining(&traces, video.clone(), &cfg, &mut sink)?,
        Some(b) => {
            let (base_actor, _) = Mlp::load(b)?;
            run_rl_finetune(&base_actor, &traces, video.clone(), &cfg, &mut sink)?.actor
        }
    };
    if let Some(e) = io_err {
        return Err(e);
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    actor.save(&args.out, ModelMeta { seed: cfg.seed, stage: stage.into() })?;
    let record = TrainRecord { manifest: &args.manifest, video: &vpath, base: base.as_deref(), train: &cfg };
    RunRecord::new(&format!("train-{stage}"), Some(cfg.seed), record).write(&sibling(&args.out, "config.json"))?;
    info!("wrote {}", args.out.display());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let algorithm: Algorithm = args.algo.parse()?;
    let role = match args.group.as_str() {
        "train" => Role::Train,
        "test" => Role::Test,
        "ood" => Role::Ood,
        g => return Err(Error::Config(format!("unknown group {g:?}"))),
    };
    let (bench, video, vpath) = load_bench(&args.manifest, args.video.as_deref())?;
    let qoe = QoeConfig::new(bench.mu);
    let seeds = if args.seeds.is_empty() { vec![0] } else { args.seeds.clone() };
    let cfg = RunConfig {
        manifest: args.manifest.clone(),
        video: Some(vpath),
        algorithm,
        models: args.models.clone(),
        seeds,
        group: args.group.clone(),
        out: args.out.clone(),
        greedy: !args.sample,
        sim: Default::default(),
        qoe,
        expert: ExpertConfig::default(),
    };
    cfg.validate()?;
    let sets: Vec<&TraceSet> = bench.group(role);
    if sets.is_empty() {
        return Err(Error::Config(format!("manifest has no {} sets", args.group)));
    }

    let models: Vec<Option<Mlp>> = if algorithm.is_learned() {
        cfg.models.iter().map(|p| Mlp::load(p).map(|(m, _)| Some(m))).collect::<Result<_>>()?
    } else {
        vec![None]
    };
    let mut report = EvalReport::new(algorithm.as_str());
    for (run, model) in models.iter().enumerate() {
        let seed = cfg.seeds[run % cfg.seeds.len()];
        let mut evals = Vec::with_capacity(sets.len());
        for set in &sets {
            let make = || match model {
                Some(m) => Ok(Box::new(abr_core::harness::PolicyController::new(m.clone(), cfg.greedy, seed)) as _),
                None => make_policy(algorithm, None, qoe, cfg.expert, cfg.greedy),
            };
            let ev = evaluate(make, set, &video, &cfg.sim, &qoe)?;
            info!("{algorithm} run {run} on {}: mean QoE {:.3}", ev.trace_set, ev.mean_qoe());
            evals.push(ev);
        }
        report.push_run(evals)?;
    }

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let results = args.out.join("results.csv");
    write_rows(File::create(&results).map_err(|e| Error::io(&results, e))?, &report.rows())?;
    let summary = args.out.join("summary.csv");
    write_rows(File::create(&summary).map_err(|e| Error::io(&summary, e))?, &report.summaries())?;
    RunRecord::new("eval", Some(cfg.seeds[0]), &cfg).write(&args.out.join("config.json"))?;
    for s in report.summaries() {
        println!("{}\t{}\t{:.3}\t(runs: {})", s.algorithm, s.trace_set, s.mean_qoe, s.runs);
    }
    Ok(())
}

fn rank(input: &Path, out: &Path) -> Result<()> {
    let table = read_qoe_table(File::open(input).map_err(|e| Error::io(input, e))?)?;
    let report = average_rank(&table)?;
    report.write_csv(File::create(out).map_err(|e| Error::io(out, e))?)?;
    for (alg, r) in report.algorithms.iter().zip(&report.ave_rank) {
        println!("{alg}\t{:.1}", abr_core::qoe::round1(*r));
    }
    Ok(())
}

fn stats(manifest: &Path, as_json: bool) -> Result<()> {
    let bench = load_manifest(manifest)?;
    let mut rows = Vec::new();
    for role in [Role::Train, Role::Test, Role::Ood] {
        for set in bench.group(role) {
            let s = trace_stats(set)?;
            rows.push(json!({ "set": set.name, "role": format!("{role:?}").to_lowercase(),
                              "count": s.count, "min_mbps": s.min_bw, "max_mbps": s.max_bw }));
            if !as_json {
                println!("{}\t{:?}\t{}\t{:.2}-{:.2} Mbps", set.name, role, s.count, s.min_bw, s.max_bw);
            }
        }
    }
    if as_json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
    }
    Ok(())
}
