//! Command-line front end: expert training, IMP experiment orchestration,
//! post-hoc analysis and plot export. Exit codes: 0 success, 2 config error,
//! 3 precondition failure, 4 numeric failure.

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use ticketlab::agents::{ExpertCheckpoint, ExpertPolicy};
use ticketlab::analysis::{
    self, input_column_stats, INPUT_SUMMARY_HEADER, LAYER_RATIOS_HEADER,
};
use ticketlab::config::ExperimentConfig;
use ticketlab::imp::{run_imp_cached, ImpRunReport};
use ticketlab::net::MaskSet;
use ticketlab::plot::{condition_color, write_sparsity_plot, Series};
use ticketlab::prune::Condition;
use ticketlab::{Error, Result};

pub const AGGREGATE_HEADER: &str = "run_id,condition,seed,iteration,frac_remaining,best_return,normalized_return,best_step,n_eliminated_inputs";

#[derive(Parser)]
#[command(name = "ticketlab", about = "Lottery-ticket experiments for small RL agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a dense expert policy and write a verified checkpoint.
    TrainExpert(TrainExpertArgs),
    /// Run iterative magnitude pruning for each (condition, seed) pair.
    Imp(ImpArgs),
    /// Summarize finished runs: input support, layer ratios, normalized returns.
    Analyze(AnalyzeArgs),
    /// Render the sparsity/performance plot from an aggregate CSV.
    Plot(PlotArgs),
}

#[derive(Args)]
struct TrainExpertArgs {
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Mean evaluation return that counts as success.
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ImpArgs {
    #[arg(long)]
    config: PathBuf,
    /// Budget preset: `full` (tables as configured) or `desk` (scaled down).
    #[arg(long, default_value = "full")]
    preset: String,
    /// Comma-separated seed override, e.g. `--seed-list 1,2,3`.
    #[arg(long)]
    seed_list: Option<String>,
    /// Comma-separated condition filter, e.g. `--conditions mask_weights`.
    #[arg(long)]
    conditions: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Max concurrent (condition, seed) runs.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    rewind_step: Option<usize>,
    /// Prune the critic jointly with the actor (PPO only).
    #[arg(long)]
    prune_critic: bool,
    /// Reuse finished runs from this cache directory.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Directory containing `*_report.json` files from `imp`.
    #[arg(long)]
    out_dir: PathBuf,
    /// Channel grouping `channels,cells` for channel-major inputs.
    #[arg(long)]
    channel_shape: Option<String>,
}

#[derive(Args)]
struct PlotArgs {
    /// Aggregate CSV produced by `imp`.
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "normalized performance vs sparsity")]
    title: String,
}

#[derive(Serialize, Deserialize)]
struct RunManifest {
    config_hash: String,
    code_version: String,
    layout_hash: String,
    seeds: Vec<u64>,
    conditions: Vec<String>,
    outputs: Vec<String>,
    timestamp_unix: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn cmd_train_expert(args: &TrainExpertArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.run.seeds = vec![seed];
    }
    let seed = *cfg.run.seeds.first().ok_or_else(|| Error::Config("no seed".into()))?;
    let env_spec = cfg.env_spec()?;
    let trainer = cfg.build_trainer(&env_spec)?;
    let spec = cfg.network_spec(&env_spec)?;

    let (params, _snap) = trainer.init(seed)?;
    let masks = MaskSet::ones_like(&params);
    // Threshold 0 (or anything at or below the untrained return) succeeds
    // without training.
    let (initial, _) = trainer.evaluate(&params, &masks, cfg.training.eval_episodes, seed)?;
    let (best_params, best_return) = if initial >= args.threshold {
        (params, initial)
    } else {
        let imp_cfg = cfg.imp_config(Condition::MaskWeights, seed)?;
        let settings = ticketlab::agents::TrainSettings {
            budget: imp_cfg.budget,
            eval_every: imp_cfg.eval_every,
            eval_episodes: imp_cfg.eval_episodes,
            seed,
            eval_seed: seed ^ 0x9e37_79b9_7f4a_7c15,
            checkpoint_steps: vec![],
        };
        let outcome = trainer.train(&params, &masks, &settings)?;
        (outcome.best_params, outcome.best_return)
    };

    let ckpt = ExpertCheckpoint::new(ExpertPolicy { spec, params: best_params })?;
    let json = serde_json::to_string(&ckpt)
        .map_err(|e| Error::invalid(format!("checkpoint serialize: {e}")))?;
    write_atomic(&args.out, json.as_bytes())?;

    let reached = best_return >= args.threshold;
    let manifest = RunManifest {
        config_hash: cfg.trainer_fingerprint()?,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        layout_hash: env_spec.layout.hash.clone(),
        seeds: vec![seed],
        conditions: vec![],
        outputs: vec![args.out.display().to_string()],
        timestamp_unix: now_unix(),
        warning: (!reached).then(|| {
            format!("best return {best_return} below threshold {}", args.threshold)
        }),
    };
    let manifest_path = args.out.with_extension("manifest.json");
    write_atomic(
        &manifest_path,
        serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::invalid(format!("manifest serialize: {e}")))?
            .as_bytes(),
    )?;
    eprintln!("expert best return {best_return} -> {}", args.out.display());
    if !reached {
        return Err(Error::Precondition(format!(
            "expert reached {best_return}, below threshold {}",
            args.threshold
        )));
    }
    Ok(())
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| Error::Config(format!("bad {what} entry '{p}'"))))
        .collect()
}

fn cmd_imp(args: &ImpArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    cfg.apply_preset(args.preset.parse()?);
    if let Some(s) = &args.seed_list {
        cfg.run.seeds = parse_list(s, "seed")?;
    }
    if let Some(c) = &args.conditions {
        cfg.run.conditions = parse_list::<Condition>(c, "condition")?
            .into_iter()
            .map(|c| c.name().to_string())
            .collect();
    }
    if let Some(r) = args.rewind_step {
        cfg.run.rewind_step = r;
    }
    if args.prune_critic {
        cfg.ppo.prune_critic = Some(true);
    }
    if let Some(d) = &args.out_dir {
        cfg.run.out_dir = d.display().to_string();
    }

    let env_spec = cfg.env_spec()?;
    let conditions = cfg.conditions()?;
    let seeds = cfg.run.seeds.clone();
    let out_dir = cfg.out_dir();
    std::fs::create_dir_all(&out_dir)?;

    let mut jobs: Vec<(Condition, u64)> = Vec::new();
    for &c in &conditions {
        for &s in &seeds {
            jobs.push((c, s));
        }
    }

    let results: Mutex<Vec<ImpRunReport>> = Mutex::new(Vec::new());
    let next: Mutex<usize> = Mutex::new(0);
    let workers = args.workers.clamp(1, jobs.len().max(1));
    std::thread::scope(|scope| -> Result<()> {
        let mut handles = Vec::new();
        for _ in 0..workers {
            let cfg = &cfg;
            let env_spec = &env_spec;
            let jobs = &jobs;
            let results = &results;
            let next = &next;
            let cache_dir = args.cache_dir.clone();
            handles.push(scope.spawn(move || -> Result<()> {
                loop {
                    let job = {
                        let mut n = next.lock().unwrap();
                        if *n >= jobs.len() {
                            return Ok(());
                        }
                        *n += 1;
                        jobs[*n - 1]
                    };
                    let (condition, seed) = job;
                    let trainer = cfg.build_trainer(env_spec)?;
                    let imp_cfg = cfg.imp_config(condition, seed)?;
                    let report = match &cache_dir {
                        Some(dir) => run_imp_cached(trainer.as_ref(), env_spec, &imp_cfg, dir)?,
                        None => ticketlab::imp::run_imp(trainer.as_ref(), env_spec, &imp_cfg)?,
                    };
                    results.lock().unwrap().push(report);
                }
            }));
        }
        for h in handles {
            h.join().map_err(|_| Error::IllegalState("worker thread panicked".into()))??;
        }
        Ok(())
    })?;

    let mut reports = results.into_inner().unwrap();
    reports.sort_by(|a, b| a.run_id.cmp(&b.run_id));

    let mut outputs = Vec::new();
    for report in &reports {
        let path = out_dir.join(format!("{}_report.json", report.run_id));
        write_atomic(
            &path,
            serde_json::to_string(report)
                .map_err(|e| Error::invalid(format!("report serialize: {e}")))?
                .as_bytes(),
        )?;
        outputs.push(path.display().to_string());
    }

    let mut csv = String::from(AGGREGATE_HEADER);
    csv.push('\n');
    for r in &reports {
        for rec in &r.records {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.run_id,
                r.condition.name(),
                r.seed,
                rec.iteration,
                rec.frac_remaining,
                rec.best_return,
                rec.normalized_return,
                rec.best_step,
                rec.eliminated_inputs.len()
            ));
        }
    }
    let agg_path = out_dir.join("aggregate.csv");
    write_atomic(&agg_path, csv.as_bytes())?;
    outputs.push(agg_path.display().to_string());

    let manifest = RunManifest {
        config_hash: cfg.trainer_fingerprint()?,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        layout_hash: env_spec.layout.hash.clone(),
        seeds,
        conditions: conditions.iter().map(|c| c.name().to_string()).collect(),
        outputs,
        timestamp_unix: now_unix(),
        warning: reports
            .iter()
            .find(|r| r.failed_iteration.is_some())
            .map(|r| format!("run {} failed: {:?}", r.run_id, r.failure)),
    };
    write_atomic(
        &out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::invalid(format!("manifest serialize: {e}")))?
            .as_bytes(),
    )?;

    if let Some(bad) = reports.iter().find(|r| r.failed_iteration.is_some()) {
        return Err(Error::numeric(format!(
            "run {} aborted at iteration {:?}",
            bad.run_id, bad.failed_iteration
        )));
    }
    eprintln!("{} runs -> {}", reports.len(), out_dir.display());
    Ok(())
}

fn load_reports(dir: &Path) -> Result<Vec<ImpRunReport>> {
    let mut reports = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().is_some_and(|n| n.to_string_lossy().ends_with("_report.json")))
        .collect();
    entries.sort();
    for path in entries {
        let json = std::fs::read_to_string(&path)?;
        let report: ImpRunReport = serde_json::from_str(&json)
            .map_err(|e| Error::Config(format!("bad report {}: {e}", path.display())))?;
        reports.push(report);
    }
    if reports.is_empty() {
        return Err(Error::Precondition(format!("no *_report.json files in {}", dir.display())));
    }
    Ok(reports)
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let channel_shape = match &args.channel_shape {
        Some(s) => {
            let parts: Vec<usize> = parse_list(s, "channel shape")?;
            if parts.len() != 2 {
                return Err(Error::Config("channel shape must be 'channels,cells'".into()));
            }
            Some((parts[0], parts[1]))
        }
        None => None,
    };
    let reports = load_reports(&args.out_dir)?;

    let mut input_summary = String::from(INPUT_SUMMARY_HEADER);
    input_summary.push('\n');
    let mut layer_ratios = String::from(LAYER_RATIOS_HEADER);
    layer_ratios.push('\n');
    let mut normalized =
        String::from("run_id,condition,seed,iteration,frac_remaining,normalized_return\n");

    for report in &reports {
        let mut bytes = Vec::new();
        analysis::write_layer_ratio_rows(&mut bytes, report)?;
        layer_ratios.push_str(&String::from_utf8_lossy(&bytes));

        if let (Some(params), Some(masks)) = (&report.final_best_params, &report.final_masks) {
            let summary = input_column_stats(params, masks, channel_shape)?;
            let mut bytes = Vec::new();
            analysis::write_input_summary_rows(&mut bytes, &report.run_id, &summary)?;
            input_summary.push_str(&String::from_utf8_lossy(&bytes));
        }
        for rec in &report.records {
            normalized.push_str(&format!(
                "{},{},{},{},{},{}\n",
                report.run_id,
                report.condition.name(),
                report.seed,
                rec.iteration,
                rec.frac_remaining,
                rec.normalized_return
            ));
        }
    }
    write_atomic(&args.out_dir.join("input_summary.csv"), input_summary.as_bytes())?;
    write_atomic(&args.out_dir.join("layer_ratios.csv"), layer_ratios.as_bytes())?;
    write_atomic(&args.out_dir.join("normalized.csv"), normalized.as_bytes())?;
    eprintln!("analysis CSVs -> {}", args.out_dir.display());
    Ok(())
}

fn cmd_plot(args: &PlotArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.csv)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Config("empty csv".into()))?;
    if header != AGGREGATE_HEADER {
        return Err(Error::Config(format!("unexpected csv header '{header}'")));
    }
    // (condition, iteration) -> (frac, values-over-seeds)
    let mut cells: BTreeMap<(String, usize), (f64, Vec<f64>)> = BTreeMap::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(Error::Config(format!("bad csv row '{line}'")));
        }
        let condition = f[1].to_string();
        let iteration: usize =
            f[3].parse().map_err(|_| Error::Config(format!("bad iteration '{}'", f[3])))?;
        let frac: f64 =
            f[4].parse().map_err(|_| Error::Config(format!("bad fraction '{}'", f[4])))?;
        let norm: f64 =
            f[6].parse().map_err(|_| Error::Config(format!("bad normalized '{}'", f[6])))?;
        let cell = cells.entry((condition, iteration)).or_insert((frac, Vec::new()));
        cell.1.push(norm);
    }

    let mut series = Vec::new();
    for cond in Condition::ALL {
        let name = cond.name().to_string();
        let mut points: Vec<(usize, f64, f64, f64)> = cells
            .iter()
            .filter(|((c, _), _)| *c == name)
            .map(|((_, iter), (frac, vals))| {
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64;
                (*iter, *frac, m, var.sqrt())
            })
            .collect();
        if points.is_empty() {
            continue;
        }
        points.sort_by_key(|p| p.0);
        series.push(Series {
            label: name,
            color: condition_color(cond).to_string(),
            xs: points.iter().map(|p| p.1).collect(),
            mean: points.iter().map(|p| p.2).collect(),
            std: points.iter().map(|p| p.3).collect(),
        });
    }
    write_sparsity_plot(&args.out, &series, &args.title, "normalized return")?;
    eprintln!("plot -> {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::TrainExpert(args) => cmd_train_expert(args),
        Command::Imp(args) => cmd_imp(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Plot(args) => cmd_plot(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
