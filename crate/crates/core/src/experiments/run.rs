use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{emit_report, run_grid_search, ExperimentConfig, GridScore, Report};
use crate::cohort::io::read_jsonl_file;
use crate::cohort::{filter_cohort, generate_synthetic_cohort, kfold_partition, split_subjects, Cohort, Diagnosis, SubjectHistory};
use crate::evaluation::{
    all_pairs_metrics, eligible_instances, predict_eligible, pseudo_choices, pseudo_set_metrics, summarize, Ensemble,
    Frequency, Metric, MetricSummary, DEFAULT_ECE_BINS,
};
use crate::features::{fit_imputation_stats, ImputationStats, ModalityCase, VisitTable};
use crate::model::checkpoint::{load_checkpoint, save_checkpoint};
use crate::model::{ModelConfig, ModelParams};
use crate::seed::{derive_seed, stream};
use crate::training::{
    compute_sample_weights, expand_dataset, expand_dataset_ablated, expansion_ratio, train_model, EpochLog,
    TrainingSet, TrajectorySample,
};
use crate::{Error, Result};

/// Environment variable holding the number of worker threads.
pub const WORKERS_ENV: &str = "PROGCAST_WORKERS";
pub const TOOL_VERSION: &str = concat!("progcast ", env!("CARGO_PKG_VERSION"));

pub const GROUPS: [Diagnosis; 2] = [Diagnosis::CN, Diagnosis::MCI];

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub group: Diagnosis,
    pub follow_up_year: u32,
    pub modality_case: String,
    pub history_start: i32,
    pub frequency: Frequency,
}

/// One split's result for one (group, year, case, scenario) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub key: CellKey,
    pub n_subjects: usize,
    /// Instances scored per replicate.
    pub n_samples: usize,
    /// Mean and standard error over pseudo sets (a single replicate when
    /// every eligible pair is scored at once); `None` where undefined.
    pub metrics: [Option<MetricSummary>; 6],
    /// AUROC of each pseudo set, kept for paired differences.
    pub auroc_per_set: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub split: usize,
    pub seed: u64,
    pub config_hash: String,
    pub bias_reduction: bool,
    pub model_config: ModelConfig,
    pub grid_scores: Vec<GridScore>,
    pub n_train_subjects: usize,
    pub n_test_subjects: usize,
    pub n_train_samples: usize,
    /// Expanded over baseline-only training sample count.
    pub expansion_ratio: Option<f64>,
    pub checkpoints: Vec<String>,
    pub cells: Vec<CellResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestSplit {
    pub split: usize,
    pub seed: u64,
    pub model_config: ModelConfig,
    /// Checkpoint stems relative to the output directory.
    pub checkpoints: Vec<String>,
    pub result: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub training_fingerprint: String,
    pub master_seed: u64,
    pub bias_reduction: bool,
    pub splits: Vec<ManifestSplit>,
    pub reports: Vec<String>,
    pub completed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunMode {
    /// Train (or reuse matching checkpoints), evaluate, and report.
    Full,
    /// Train and persist checkpoints only.
    TrainOnly,
    /// Evaluate existing checkpoints; fails if any are missing or stale.
    EvaluateOnly,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunOptions {
    pub mode: RunMode,
    /// Restrict the run to one split.
    pub only_split: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { mode: RunMode::Full, only_split: None }
    }
}

pub struct RunOutcome {
    pub manifest: RunManifest,
    /// Splits whose evaluation was computed in this invocation.
    pub evaluated_splits: Vec<usize>,
    /// Splits whose models were trained in this invocation.
    pub trained_splits: Vec<usize>,
    pub report: Option<Report>,
}

pub(crate) fn suffix(bias_reduction: bool) -> &'static str {
    if bias_reduction {
        ""
    } else {
        "_all_pairs"
    }
}

pub fn manifest_path(out_dir: &Path, bias_reduction: bool) -> PathBuf {
    out_dir.join(format!("manifest{}.json", suffix(bias_reduction)))
}

fn split_dir(s: usize) -> String {
    format!("split_{s:03}")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads or generates the cohort and applies the exclusion rules.
pub fn load_cohort(cfg: &ExperimentConfig) -> Result<Cohort> {
    let subjects = match &cfg.cohort_path {
        Some(path) => {
            let (subjects, rejected) = read_jsonl_file(path)?;
            for (id, reason) in &rejected {
                log::warn!("subject {id} rejected while reading: {reason}");
            }
            subjects
        }
        None => generate_synthetic_cohort(&cfg.generator, &cfg.schema)?,
    };
    Ok(filter_cohort(subjects))
}

/// Thread pool sized by [`WORKERS_ENV`], or by rayon's default when unset.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let n = match std::env::var(WORKERS_ENV) {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| Error::Config(format!("{WORKERS_ENV}={v} is not a count")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| Error::Config(e.to_string()))
}

/// Subjects and encodings of one train/test split.
pub struct SplitData {
    pub split: usize,
    pub seed: u64,
    pub train: Vec<SubjectHistory>,
    pub test: Vec<SubjectHistory>,
    /// (training subjects, validation subjects) per fold.
    pub folds: Vec<(Vec<SubjectHistory>, Vec<SubjectHistory>)>,
    pub stats: ImputationStats,
    pub train_table: VisitTable,
}

pub fn prepare_split(cfg: &ExperimentConfig, cohort: &Cohort, s: usize) -> Result<SplitData> {
    let seed = derive_seed(cfg.master_seed, &[stream::SPLIT, s as u64]);
    let split = split_subjects(&cohort.subjects, cfg.test_fraction, seed)?;
    let train = cohort.select(&split.train);
    let test = cohort.select(&split.test);
    let fold_seed = derive_seed(cfg.master_seed, &[stream::FOLD, s as u64]);
    let val_sets: Vec<Vec<String>> = if cfg.k_folds >= 2 {
        kfold_partition(&train, cfg.k_folds, true, fold_seed)?
    } else {
        // A single fold still needs a validation set for early stopping.
        vec![split_subjects(&train, 0.2, fold_seed)?.test]
    };
    let folds = val_sets
        .iter()
        .map(|val_ids| {
            let val_ids: BTreeSet<&String> = val_ids.iter().collect();
            let (v, t): (Vec<SubjectHistory>, Vec<SubjectHistory>) =
                train.iter().cloned().partition(|s| val_ids.contains(&s.subject_id));
            (t, v)
        })
        .collect();
    let stats = fit_imputation_stats(train.iter().flat_map(|s| s.visits.iter()), &cfg.schema);
    let train_table = VisitTable::encode(&train, &cfg.schema, &stats, &ModalityCase::complete())?;
    Ok(SplitData { split: s, seed, train, test, folds, stats, train_table })
}

fn samples_for(cfg: &ExperimentConfig, subjects: &[SubjectHistory]) -> Vec<TrajectorySample> {
    let mut samples =
        if cfg.ablation.no_expansion { expand_dataset_ablated(subjects) } else { expand_dataset(subjects) };
    compute_sample_weights(&mut samples);
    samples
}

struct FoldSamples {
    train: Vec<TrajectorySample>,
    val: Vec<TrajectorySample>,
}

fn fold_samples(cfg: &ExperimentConfig, data: &SplitData) -> Vec<FoldSamples> {
    data.folds.iter().map(|(t, v)| FoldSamples { train: samples_for(cfg, t), val: samples_for(cfg, v) }).collect()
}

fn train_one(
    cfg: &ExperimentConfig,
    data: &SplitData,
    fold: &FoldSamples,
    model_cfg: &ModelConfig,
    seed: u64,
) -> Result<(ModelParams, EpochLog)> {
    let set = TrainingSet {
        table: &data.train_table,
        train: &fold.train,
        val: &fold.val,
        age_center: data.stats.age_mean,
        age_scale: data.stats.age_std,
    };
    train_model(&set, model_cfg, &cfg.training, seed)
}

#[derive(Serialize, Deserialize)]
struct TrainedMarker {
    training_fingerprint: String,
    model_config: ModelConfig,
    grid_scores: Vec<GridScore>,
    checkpoints: Vec<String>,
}

pub struct TrainedSplit {
    pub model_config: ModelConfig,
    pub grid_scores: Vec<GridScore>,
    pub models: Vec<ModelParams>,
    /// Checkpoint stems relative to the output directory.
    pub checkpoints: Vec<String>,
    pub freshly_trained: bool,
}

fn load_trained(cfg: &ExperimentConfig, out_dir: &Path, s: usize) -> Result<Option<TrainedSplit>> {
    let marker_path = out_dir.join(split_dir(s)).join("models").join("trained.json");
    if !marker_path.exists() {
        return Ok(None);
    }
    let marker: TrainedMarker = read_json(&marker_path)?;
    if marker.training_fingerprint != cfg.training_fingerprint() {
        return Ok(None);
    }
    let hash = cfg.schema.hash();
    let mut models = Vec::with_capacity(marker.checkpoints.len());
    for stem in &marker.checkpoints {
        models.push(load_checkpoint(&out_dir.join(stem), Some(&hash))?.params);
    }
    Ok(Some(TrainedSplit {
        model_config: marker.model_config,
        grid_scores: marker.grid_scores,
        models,
        checkpoints: marker.checkpoints,
        freshly_trained: false,
    }))
}

/// Grid search (when the grid has more than one point), then `k * seeds`
/// models with the selected architecture, persisted as checkpoints.
pub fn train_split(
    cfg: &ExperimentConfig,
    data: &SplitData,
    out_dir: &Path,
    pool: &rayon::ThreadPool,
) -> Result<TrainedSplit> {
    let s = data.split;
    let folds = fold_samples(cfg, data);
    let points = cfg.grid.points(cfg.schema.token_width());
    let (model_cfg, grid_scores) = run_grid_search(&points, folds.len(), |p, f| {
        let idx = points.iter().position(|q| q == p).unwrap_or(0);
        let seed = derive_seed(cfg.master_seed, &[stream::GRID, s as u64, f as u64, idx as u64]);
        let (_, log) = pool.install(|| train_one(cfg, data, &folds[f], p, seed))?;
        Ok(log.records[log.best].criterion)
    })?;

    let jobs: Vec<(usize, usize)> =
        (0..folds.len()).flat_map(|f| (0..cfg.seeds_per_fold).map(move |k| (f, k))).collect();
    let trained: Vec<(ModelParams, EpochLog)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(f, k)| {
                let seed = derive_seed(cfg.master_seed, &[stream::MODEL, s as u64, f as u64, k as u64]);
                train_one(cfg, data, &folds[f], &model_cfg, seed)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let models_rel = format!("{}/models", split_dir(s));
    let hash = cfg.schema.hash();
    let mut checkpoints = Vec::with_capacity(jobs.len());
    let mut models = Vec::with_capacity(jobs.len());
    for (&(f, k), (params, log)) in jobs.iter().zip(trained) {
        let stem_rel = format!("{models_rel}/fold{f}_seed{k}");
        let stem = out_dir.join(&stem_rel);
        let seed = derive_seed(cfg.master_seed, &[stream::MODEL, s as u64, f as u64, k as u64]);
        save_checkpoint(&stem, &params, &hash, seed, Some(&data.stats))?;
        let log_path = out_dir.join(format!("{stem_rel}.epochs.csv"));
        fs::write(&log_path, log.to_csv()).map_err(|e| Error::io(&log_path, e))?;
        checkpoints.push(stem_rel);
        models.push(params);
    }
    let marker = TrainedMarker {
        training_fingerprint: cfg.training_fingerprint(),
        model_config: model_cfg.clone(),
        grid_scores: grid_scores.clone(),
        checkpoints: checkpoints.clone(),
    };
    write_json(&out_dir.join(&models_rel).join("trained.json"), &marker)?;
    Ok(TrainedSplit { model_config: model_cfg, grid_scores, models, checkpoints, freshly_trained: true })
}

/// Scores every (group, year, case, scenario) cell on the split's test subjects.
pub fn evaluate_split(cfg: &ExperimentConfig, data: &SplitData, ensemble: &Ensemble) -> Result<Vec<CellResult>> {
    let specs = cfg.scenario_specs()?;
    let mut tables: BTreeMap<String, VisitTable> = BTreeMap::new();
    for case in &cfg.modality_cases {
        tables.insert(case.to_string(), VisitTable::encode(&data.test, &cfg.schema, &data.stats, case)?);
    }
    let bias_reduction = !cfg.ablation.no_bias_reduction;
    let mut cells = Vec::new();
    for group in GROUPS {
        for year in 1..=cfg.follow_up_years {
            let set = eligible_instances(&data.test, group, year);
            if set.per_subject.is_empty() {
                log::warn!("split {}: no test subject is eligible for {group} at year {year}", data.split);
                continue;
            }
            let pseudo_seed =
                derive_seed(cfg.master_seed, &[stream::PSEUDO, data.split as u64, group.index() as u64, u64::from(year)]);
            let choices = pseudo_choices(&set, cfg.n_pseudo, pseudo_seed);
            for spec in &specs {
                let case = spec.case.to_string();
                let preds = predict_eligible(ensemble, &tables[&case], &set, spec)?;
                let key = CellKey {
                    group,
                    follow_up_year: year,
                    modality_case: case,
                    history_start: spec.history_start,
                    frequency: spec.frequency,
                };
                let cell = if bias_reduction {
                    let per_set = choices
                        .iter()
                        .map(|c| pseudo_set_metrics(&set, &preds, c, DEFAULT_ECE_BINS))
                        .collect::<Result<Vec<_>>>()?;
                    let metrics = std::array::from_fn(|m| {
                        let s = summarize(&per_set.iter().map(|v| v[m]).collect::<Vec<_>>());
                        (s.n > 0).then_some(s)
                    });
                    CellResult {
                        key,
                        n_subjects: set.per_subject.len(),
                        n_samples: set.per_subject.len(),
                        metrics,
                        auroc_per_set: per_set.iter().map(|v| v[Metric::Auroc.index()]).collect(),
                    }
                } else {
                    let (values, n) = all_pairs_metrics(&set, &preds, DEFAULT_ECE_BINS)?;
                    CellResult {
                        key,
                        n_subjects: set.per_subject.len(),
                        n_samples: n,
                        metrics: values.map(|v| v.map(|x| summarize(&[Some(x)]))),
                        auroc_per_set: vec![values[Metric::Auroc.index()]],
                    }
                };
                cells.push(cell);
            }
        }
    }
    Ok(cells)
}

/// Runs (or resumes) an experiment in `cfg.out_dir`. Splits whose results are
/// already persisted for this exact config are not recomputed, and trained
/// checkpoints are reused whenever the training settings match.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    let out_dir = cfg.out_dir.clone();
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let cohort = load_cohort(cfg)?;
    write_json(&out_dir.join("exclusions.json"), &cohort.exclusions)?;
    let pool = worker_pool()?;
    let bias_reduction = !cfg.ablation.no_bias_reduction;
    let config_hash = cfg.hash();
    let mut manifest = RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        config_hash: config_hash.clone(),
        training_fingerprint: cfg.training_fingerprint(),
        master_seed: cfg.master_seed,
        bias_reduction,
        splits: Vec::new(),
        reports: Vec::new(),
        completed: false,
    };
    let mpath = manifest_path(&out_dir, bias_reduction);
    let mut evaluated = Vec::new();
    let mut trained_splits = Vec::new();
    let splits: Vec<usize> = match opts.only_split {
        Some(s) if s >= cfg.n_splits => return Err(Error::Config(format!("split {s} outside 0..{}", cfg.n_splits))),
        Some(s) => vec![s],
        None => (0..cfg.n_splits).collect(),
    };
    for s in splits {
        let result_rel = format!("{}/result{}.json", split_dir(s), suffix(bias_reduction));
        let result_path = out_dir.join(&result_rel);
        if opts.mode != RunMode::TrainOnly && result_path.exists() {
            let existing: SplitResult = read_json(&result_path)?;
            if existing.config_hash == config_hash {
                log::info!("split {s}: results already present");
                manifest.splits.push(ManifestSplit {
                    split: s,
                    seed: existing.seed,
                    model_config: existing.model_config,
                    checkpoints: existing.checkpoints,
                    result: Some(result_rel),
                });
                continue;
            }
        }
        let data = prepare_split(cfg, &cohort, s)?;
        let trained = match load_trained(cfg, &out_dir, s)? {
            Some(t) => t,
            None if opts.mode == RunMode::EvaluateOnly => {
                return Err(Error::Config(format!("split {s}: no checkpoints trained with this configuration")));
            }
            None => {
                log::info!("split {s}: training {} models", data.folds.len() * cfg.seeds_per_fold);
                train_split(cfg, &data, &out_dir, &pool)?
            }
        };
        if trained.freshly_trained {
            trained_splits.push(s);
        }
        let mut entry = ManifestSplit {
            split: s,
            seed: data.seed,
            model_config: trained.model_config.clone(),
            checkpoints: trained.checkpoints.clone(),
            result: None,
        };
        if opts.mode != RunMode::TrainOnly {
            let ensemble = Ensemble::new(trained.models, cfg.schema.hash())?;
            let cells = evaluate_split(cfg, &data, &ensemble)?;
            let ablated = expand_dataset_ablated(&data.train);
            let result = SplitResult {
                split: s,
                seed: data.seed,
                config_hash: config_hash.clone(),
                bias_reduction,
                model_config: trained.model_config,
                grid_scores: trained.grid_scores,
                n_train_subjects: data.train.len(),
                n_test_subjects: data.test.len(),
                n_train_samples: samples_for(cfg, &data.train).len(),
                expansion_ratio: Some(expansion_ratio(&expand_dataset(&data.train), &ablated)).filter(|r| r.is_finite()),
                checkpoints: trained.checkpoints,
                cells,
            };
            write_json(&result_path, &result)?;
            entry.result = Some(result_rel);
            evaluated.push(s);
        }
        manifest.splits.push(entry);
        write_json(&mpath, &manifest)?;
    }
    let report = if opts.mode != RunMode::TrainOnly {
        let report = emit_report(&out_dir, &manifest)?;
        manifest.reports = report.files.clone();
        Some(report)
    } else {
        None
    };
    manifest.completed = manifest.splits.len() == cfg.n_splits;
    write_json(&mpath, &manifest)?;
    Ok(RunOutcome { manifest, evaluated_splits: evaluated, trained_splits, report })
}
