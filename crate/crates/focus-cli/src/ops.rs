//! Subcommand implementations: thin glue from config + paths to the library
//! pipeline, with default artifact locations shared across commands.

use std::path::{Path, PathBuf};

use focus_core::dynamics::{self, DynamicsModel, NetConfig};
use focus_core::envs::Transition;
use focus_core::error::{Error, Result};
use focus_core::harness::{benchmark, config::GAMMA_HELD_OUT_TRANSITIONS, io, report, validate};
use focus_core::online::{
    collect_random_source_data, evaluate_checkpoint, online_learn, resolve_start, Method,
    MetricsRow,
};
use focus_core::seed;
use focus_core::{Manifest, RunConfig, RunDir};

use crate::log::Logger;
use crate::{
    AdaptArgs, ConfigArgs, EvalArgs, OnlineArgs, ReportArgs, TrainSourceArgs, ValidateArgs,
};

/// Master seed: the explicit flag, else the first configured seed.
fn base_seed(cfg: &RunConfig, over: Option<u64>) -> u64 {
    over.unwrap_or_else(|| cfg.train.seeds.first().copied().unwrap_or(0))
}

fn source_dir(cfg: &RunConfig, seed_value: u64) -> PathBuf {
    io::out_root(&cfg.io.out_dir)
        .join("source")
        .join(format!("{}_s{seed_value}", cfg.env.source.env_id))
}

fn benchmark_dir(cfg: &RunConfig, seed_value: u64) -> PathBuf {
    io::out_root(&cfg.io.out_dir)
        .join("benchmark")
        .join(format!("{}_s{seed_value}", cfg.env.target.env_id))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", parent.display()))))?;
    }
    Ok(())
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

/// Fixed gamma from the config, or the configured percentile of the source
/// model's squared error over freshly collected held-out source data.
fn resolve_gamma(cfg: &RunConfig, model0: &DynamicsModel, seed_value: u64) -> Result<f64> {
    let held_out = if cfg.adapt.gamma.is_none() {
        collect_random_source_data(
            &cfg.env.source,
            GAMMA_HELD_OUT_TRANSITIONS,
            cfg.train.episode_len,
            seed::substream(seed_value, "gamma_val"),
        )?
    } else {
        Vec::new()
    };
    cfg.adapt.resolve_gamma(model0, &held_out)
}

pub fn collect_source(log: &Logger, args: &ConfigArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.config)?;
    let seed_value = base_seed(&cfg, args.seed);
    let data = collect_random_source_data(
        &cfg.env.source,
        cfg.train.source_transitions,
        cfg.train.episode_len,
        seed::substream(seed_value, "source_data"),
    )?;
    let path = args
        .out
        .clone()
        .unwrap_or_else(|| source_dir(&cfg, seed_value).join("data.jsonl"));
    ensure_parent(&path)?;
    io::write_jsonl(&path, &data)?;
    log.info(
        "collect_source",
        &[("transitions", data.len().to_string()), ("path", display(&path))],
    );
    Ok(())
}

pub fn train_source(log: &Logger, args: &TrainSourceArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.common.config)?;
    let seed_value = base_seed(&cfg, args.common.seed);
    let data_path = args
        .data
        .clone()
        .unwrap_or_else(|| source_dir(&cfg, seed_value).join("data.jsonl"));
    let data: Vec<Transition> = io::read_jsonl(&data_path)?;
    let net = NetConfig {
        hidden: cfg.nn.dynamics_hidden.clone(),
        activation: cfg.nn.dynamics_activation,
    };
    let (model, training) = dynamics::train_source(
        &data,
        &net,
        &cfg.train.opt(),
        cfg.train.source_epochs,
        seed::substream(seed_value, "source_train"),
    )?;
    let ckpt = args
        .common
        .out
        .clone()
        .unwrap_or_else(|| source_dir(&cfg, seed_value).join("dynamics.ckpt"));
    ensure_parent(&ckpt)?;
    io::write_dynamics_checkpoint(&ckpt, &model, &io::DynamicsMeta::default())?;
    io::write_string(&ckpt.with_file_name("train_report.csv"), &training.to_csv_string()?)?;
    let final_loss = training.rows.last().map(|r| r.mean_loss).unwrap_or(f64::NAN);
    log.info(
        "train_source",
        &[
            ("transitions", data.len().to_string()),
            ("epochs", cfg.train.source_epochs.to_string()),
            ("final_loss", format!("{final_loss:e}")),
            ("checkpoint", display(&ckpt)),
        ],
    );
    Ok(())
}

pub fn make_benchmark(log: &Logger, args: &ConfigArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.config)?;
    let seed_value = base_seed(&cfg, args.seed);
    let bench =
        benchmark::make_benchmark(&cfg.env.target, &cfg.env.source, &cfg.benchmark, seed_value)?;
    let dir = args.out.clone().unwrap_or_else(|| benchmark_dir(&cfg, seed_value));
    benchmark::write_benchmark(&dir, &bench)?;
    let achieved = bench.manifest.achieved_distractor_fraction;
    let requested = cfg.benchmark.distractor_fraction;
    if (achieved - requested).abs() > cfg.benchmark.distractor_tolerance {
        log.warn(
            "distractor_fraction_off_target",
            &[
                ("achieved", format!("{achieved:.4}")),
                ("requested", format!("{requested:.4}")),
                ("tolerance", format!("{:.4}", cfg.benchmark.distractor_tolerance)),
            ],
        );
    }
    log.info(
        "make_benchmark",
        &[
            ("train", bench.manifest.train_size.to_string()),
            ("validation", bench.manifest.val_size.to_string()),
            ("distractor_fraction", format!("{achieved:.4}")),
            ("dir", display(&dir)),
        ],
    );
    Ok(())
}

pub fn adapt(log: &Logger, args: &AdaptArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.common.config)?;
    let seed_value = base_seed(&cfg, args.common.seed);
    let ckpt_path = args
        .source_ckpt
        .clone()
        .unwrap_or_else(|| source_dir(&cfg, seed_value).join("dynamics.ckpt"));
    let (model0, _) = io::read_dynamics_checkpoint(&ckpt_path)?;
    let bench_dir =
        args.benchmark.clone().unwrap_or_else(|| benchmark_dir(&cfg, seed_value));
    let bench = benchmark::read_benchmark(&bench_dir)?;
    let gamma = resolve_gamma(&cfg, &model0, seed_value)?;
    let schedule = cfg.adapt.weight_schedule(gamma);
    let (model, training) = dynamics::fine_tune_dynamics(
        &model0,
        &bench.train,
        args.mode,
        &schedule,
        &cfg.train.opt(),
        cfg.train.adapt_epochs,
        seed::substream(seed_value, "adapt"),
    )?;
    let dir = args.common.out.clone().unwrap_or_else(|| {
        io::out_root(&cfg.io.out_dir)
            .join("adapt")
            .join(format!("{}_{}_s{seed_value}", cfg.env.target.env_id, args.mode))
    });
    ensure_dir(&dir)?;
    let meta = io::DynamicsMeta {
        gamma_used: Some(gamma),
        mode: Some(args.mode),
        schedule: Some(schedule),
    };
    io::write_dynamics_checkpoint(&dir.join("dynamics.ckpt"), &model, &meta)?;
    io::write_string(&dir.join("train_report.csv"), &training.to_csv_string()?)?;
    let (mse, mean_distance) = validate::validation_scores(&model, &bench.validation)?;
    log.info(
        "adapt",
        &[
            ("mode", args.mode.to_string()),
            ("gamma", format!("{gamma:e}")),
            ("validation_mse", format!("{mse:e}")),
            ("validation_distance", format!("{mean_distance:e}")),
            ("dir", display(&dir)),
        ],
    );
    Ok(())
}

pub fn validate(log: &Logger, args: &ValidateArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.common.config)?;
    let seed_value = base_seed(&cfg, args.common.seed);
    let ckpt_path = args
        .source_ckpt
        .clone()
        .unwrap_or_else(|| source_dir(&cfg, seed_value).join("dynamics.ckpt"));
    let (model0, _) = io::read_dynamics_checkpoint(&ckpt_path)?;
    let bench_dir =
        args.benchmark.clone().unwrap_or_else(|| benchmark_dir(&cfg, seed_value));
    let bench = benchmark::read_benchmark(&bench_dir)?;
    let gamma = resolve_gamma(&cfg, &model0, seed_value)?;
    let schedule = cfg.adapt.weight_schedule(gamma);
    let rows = validate::run_validation(
        &model0,
        &bench.train,
        &bench.validation,
        &schedule,
        &cfg.train.opt(),
        cfg.train.adapt_epochs,
        &cfg.train.seeds,
    )?;
    let summary = validate::summarize_validation(&rows)?;
    let dir = args.common.out.clone().unwrap_or_else(|| {
        io::out_root(&cfg.io.out_dir)
            .join("validate")
            .join(cfg.env.target.env_id.to_string())
    });
    ensure_dir(&dir)?;
    io::append_csv_rows(&dir.join("validation.csv"), &rows)?;
    io::append_csv_rows(&dir.join("validation_summary.csv"), &summary)?;
    for entry in &summary {
        log.info(
            "validate_mode",
            &[
                ("mode", entry.mode.to_string()),
                ("mean_squared_error", format!("{:e}", entry.mean_squared_error)),
                ("p_focus_less", format!("{:.6}", entry.p_focus_less)),
            ],
        );
    }
    log.info("validate", &[("rows", rows.len().to_string()), ("dir", display(&dir))]);
    Ok(())
}

pub fn online(log: &Logger, args: &OnlineArgs) -> Result<()> {
    let cfg = RunConfig::load(&args.common.config)?;
    let seed_value = base_seed(&cfg, args.common.seed);
    let ckpt_path = args
        .source_ckpt
        .clone()
        .unwrap_or_else(|| source_dir(&cfg, seed_value).join("dynamics.ckpt"));
    let (model0, _) = io::read_dynamics_checkpoint(&ckpt_path)?;
    let gamma = resolve_gamma(&cfg, &model0, seed_value)?;
    let run_id = cfg.run_id(&args.method.to_string(), seed_value);
    let run_dir = match &args.common.out {
        Some(out) => RunDir { root: out.clone() },
        None => RunDir::resolve(&cfg.io.out_dir, &run_id),
    };
    run_dir.create()?;
    let manifest = Manifest::new(&run_id, seed_value, &args.method.to_string(), &cfg)?;
    run_dir.write_manifest(&manifest)?;
    log.info(
        "online_start",
        &[
            ("run_id", run_id.clone()),
            ("method", args.method.to_string()),
            ("gamma", format!("{gamma:e}")),
            ("dir", display(&run_dir.root)),
        ],
    );
    let state = online_learn(&cfg, args.method, seed_value, &model0, gamma, &run_dir)?;
    for summary in &state.summaries {
        log.info(
            "online_iteration",
            &[
                ("iteration", summary.iteration.to_string()),
                ("new_transitions", summary.new_transitions.to_string()),
                ("cumulative", summary.cumulative_transitions.to_string()),
                ("successes", summary.successes.to_string()),
            ],
        );
    }
    log.info("online_done", &[("iterations", state.iteration.to_string())]);
    Ok(())
}

pub fn eval(log: &Logger, args: &EvalArgs) -> Result<()> {
    let run_dir = RunDir { root: args.run.clone() };
    let manifest = run_dir.read_manifest()?;
    let cfg: RunConfig = serde_json::from_value(manifest.config.clone())?;
    cfg.validate()?;
    let method: Method = manifest.method.parse()?;
    let seed_value = manifest.seed;
    let start = resolve_start(&cfg, seed_value)?;
    let n_episodes = args.n_episodes.unwrap_or(cfg.eval.n_episodes);

    let mut rows: Vec<MetricsRow> = Vec::new();
    for iteration in 1.. {
        let ckpt = run_dir.dynamics_ckpt(iteration);
        if !ckpt.exists() {
            break;
        }
        let (model, meta) = io::read_dynamics_checkpoint(&ckpt)?;
        let gamma = meta.gamma_used.ok_or_else(|| {
            Error::Checkpoint(format!("{}: missing gamma_used", ckpt.display()))
        })?;
        let mde = if method.uses_gate() {
            Some(io::read_mde_checkpoint(&run_dir.mde_ckpt(iteration))?)
        } else {
            None
        };
        let row = evaluate_checkpoint(
            &model,
            mde.as_ref(),
            &cfg,
            method,
            seed_value,
            iteration,
            n_episodes,
            &start,
            gamma,
        )?;
        log.info(
            "eval_iteration",
            &[
                ("iteration", iteration.to_string()),
                ("success", format!("{:.3}", row.success)),
                ("frac_plans_reach_goal", format!("{:.3}", row.frac_plans_reach_goal)),
            ],
        );
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!(
            "no iteration checkpoints under {}",
            run_dir.root.display()
        )));
    }
    io::append_csv_rows(&run_dir.eval_metrics_path(), &rows)?;
    log.info(
        "eval",
        &[
            ("iterations", rows.len().to_string()),
            ("metrics", display(&run_dir.eval_metrics_path())),
        ],
    );
    Ok(())
}

pub fn report(log: &Logger, args: &ReportArgs) -> Result<()> {
    ensure_dir(&args.out)?;
    let mut wrote = false;
    if let Some(train_report) = &args.train_report {
        let rows = report::weight_histogram_long_from_csv(train_report)?;
        let path = args.out.join("weight_histogram.csv");
        io::append_csv_rows(&path, &rows)?;
        log.info(
            "report_weight_histogram",
            &[("rows", rows.len().to_string()), ("path", display(&path))],
        );
        wrote = true;
    }
    if let Some(validation_csv) = &args.validation {
        let rows: Vec<validate::ValidationRow> = io::read_csv_rows(validation_csv)?;
        let summary = validate::summarize_validation(&rows)?;
        let path = args.out.join("validation_summary.csv");
        io::append_csv_rows(&path, &summary)?;
        log.info("report_validation_summary", &[("path", display(&path))]);
        wrote = true;
    }
    if !args.runs.is_empty() {
        let mut all: Vec<MetricsRow> = Vec::new();
        for dir in &args.runs {
            let metrics = RunDir { root: dir.clone() }.eval_metrics_path();
            all.extend(io::read_csv_rows::<MetricsRow>(&metrics)?);
        }
        let curves = report::online_curves(&all, args.seed)?;
        let path = args.out.join("online_curves.csv");
        io::append_csv_rows(&path, &curves)?;
        log.info(
            "report_online_curves",
            &[("points", curves.len().to_string()), ("path", display(&path))],
        );
        wrote = true;
    }
    if !wrote {
        return Err(Error::Config(
            "report needs at least one of --train-report, --validation, --run".into(),
        ));
    }
    Ok(())
}
