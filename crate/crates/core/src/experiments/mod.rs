//! Experiment orchestration: configuration, repeated stratified splits,
//! per-fold multi-seed training with optional architecture search, ensemble
//! evaluation of every (group, year, modality case, scenario) cell, resumable
//! persistence and report tables.

mod config;
mod grid;
mod report;
mod run;

pub use config::{Ablation, ExperimentConfig, GridConfig, ScenarioRow};
pub use grid::{run_grid_search, GridScore};
pub use report::{aggregate, delta_csv, emit_report, metric_table, metrics_csv, summary_text, Report};
pub use run::{
    evaluate_split, load_cohort, manifest_path, prepare_split, run_experiment, train_split, worker_pool, CellKey,
    CellResult, ManifestSplit, RunManifest, RunMode, RunOptions, RunOutcome, SplitData, SplitResult, TrainedSplit,
    GROUPS, TOOL_VERSION, WORKERS_ENV,
};
