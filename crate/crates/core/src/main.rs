use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use progcast::cohort::io::{label_summary_csv, read_jsonl_file, write_jsonl_file};
use progcast::cohort::{filter_cohort, generate_synthetic_cohort};
use progcast::experiments::{
    emit_report, load_cohort, manifest_path, prepare_split, run_experiment, run_grid_search, ExperimentConfig,
    RunManifest, RunMode, RunOptions,
};
use progcast::seed::{derive_seed, stream};
use progcast::training::{compute_sample_weights, expand_dataset, expand_dataset_ablated, train_model, TrainingSet};

#[derive(Parser)]
#[command(name = "progcast", version, about = "Forecast diagnostic progression from visit histories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Train on baseline reference visits only.
    #[arg(long)]
    no_expansion: bool,
    /// Score all eligible pairs instead of pseudo test sets.
    #[arg(long)]
    no_bias_reduction: bool,
    /// Output directory (or file, for `generate`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic cohort as JSONL.
    Generate(Common),
    /// Apply the inclusion rules to a JSONL cohort.
    Filter {
        #[command(flatten)]
        common: Common,
        /// Input cohort (JSONL).
        #[arg(long)]
        cohort: PathBuf,
    },
    /// Train the models of one split.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        split: usize,
    },
    /// Select an architecture for one split.
    Gridsearch {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        split: usize,
    },
    /// Evaluate previously trained checkpoints.
    Evaluate(Common),
    /// Train, evaluate and report every split.
    Run(Common),
    /// Rebuild report tables from persisted results.
    Report(Common),
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_toml_file(path).with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    cfg.ablation.no_expansion |= common.no_expansion;
    cfg.ablation.no_bias_reduction |= common.no_bias_reduction;
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(common) => {
            let mut cfg = load_config(&common)?;
            if let Some(seed) = common.seed {
                cfg.generator.seed = seed;
            }
            let subjects = generate_synthetic_cohort(&cfg.generator, &cfg.schema)?;
            let out = common.out.unwrap_or_else(|| PathBuf::from("cohort.jsonl"));
            if let Some(dir) = out.parent() {
                fs::create_dir_all(dir)?;
            }
            write_jsonl_file(&subjects, &out)?;
            println!("wrote {} subjects to {}", subjects.len(), out.display());
        }
        Command::Filter { common, cohort } => {
            let (subjects, rejected) = read_jsonl_file(&cohort)?;
            let filtered = filter_cohort(subjects);
            let out = common.out.unwrap_or_else(|| PathBuf::from("filtered"));
            fs::create_dir_all(&out)?;
            write_jsonl_file(&filtered.subjects, &out.join("cohort.jsonl"))?;
            write(&out.join("exclusions.json"), &serde_json::to_string_pretty(&filtered.exclusions)?)?;
            write(&out.join("labels.csv"), &label_summary_csv(&filtered))?;
            println!(
                "kept {} subjects, excluded {}, unreadable {}",
                filtered.subjects.len(),
                filtered.exclusions.total(),
                rejected.len()
            );
        }
        Command::Train { common, split } => {
            let cfg = load_config(&common)?;
            let outcome = run_experiment(&cfg, &RunOptions { mode: RunMode::TrainOnly, only_split: Some(split) })?;
            for s in &outcome.manifest.splits {
                println!("split {}: {} checkpoints", s.split, s.checkpoints.len());
            }
        }
        Command::Gridsearch { common, split } => {
            let cfg = load_config(&common)?;
            let cohort = load_cohort(&cfg)?;
            let data = prepare_split(&cfg, &cohort, split)?;
            let expand = if cfg.ablation.no_expansion { expand_dataset_ablated } else { expand_dataset };
            let folds: Vec<_> = data
                .folds
                .iter()
                .map(|(t, v)| {
                    let (mut a, mut b) = (expand(t), expand(v));
                    compute_sample_weights(&mut a);
                    compute_sample_weights(&mut b);
                    (a, b)
                })
                .collect();
            let points = cfg.grid.points(cfg.schema.token_width());
            let (best, scores) = run_grid_search(&points, folds.len(), |p, f| {
                let idx = points.iter().position(|q| q == p).unwrap_or(0);
                let set = TrainingSet {
                    table: &data.train_table,
                    train: &folds[f].0,
                    val: &folds[f].1,
                    age_center: data.stats.age_mean,
                    age_scale: data.stats.age_std,
                };
                let seed = derive_seed(cfg.master_seed, &[stream::GRID, split as u64, f as u64, idx as u64]);
                let (_, log) = train_model(&set, p, &cfg.training, seed)?;
                Ok(log.records[log.best].criterion)
            })?;
            for s in &scores {
                let c = &s.config;
                let crit = s.criterion.map_or("failed".to_string(), |v| format!("{v:.6}"));
                println!("hidden {} heads {} layers {} classifier {}: {crit}", c.hidden_dim, c.heads, c.layers, c.classifier);
            }
            println!("selected: {}", serde_json::to_string(&best)?);
        }
        Command::Evaluate(common) => {
            let cfg = load_config(&common)?;
            let outcome = run_experiment(&cfg, &RunOptions { mode: RunMode::EvaluateOnly, only_split: None })?;
            report_done(&cfg, &outcome.manifest)?;
        }
        Command::Run(common) => {
            let cfg = load_config(&common)?;
            let outcome = run_experiment(&cfg, &RunOptions::default())?;
            report_done(&cfg, &outcome.manifest)?;
        }
        Command::Report(common) => {
            let cfg = load_config(&common)?;
            let path = manifest_path(&cfg.out_dir, !cfg.ablation.no_bias_reduction);
            let manifest: RunManifest = serde_json::from_str(
                &fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?,
            )?;
            let report = emit_report(&cfg.out_dir, &manifest)?;
            for f in &report.files {
                println!("{}", cfg.out_dir.join(f).display());
            }
            if !manifest.completed {
                bail!("the run in {} is incomplete", cfg.out_dir.display());
            }
        }
    }
    Ok(())
}

fn report_done(cfg: &ExperimentConfig, manifest: &RunManifest) -> Result<()> {
    for f in &manifest.reports {
        println!("{}", cfg.out_dir.join(f).display());
    }
    if !manifest.completed {
        bail!("run incomplete: {} of {} splits", manifest.splits.len(), cfg.n_splits);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
