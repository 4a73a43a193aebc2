use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cohort::GeneratorConfig;
use crate::evaluation::{Frequency, ScenarioSpec};
use crate::features::{FeatureSchema, ModalityCase};
use crate::model::{ClassifierShape, ModelConfig};
use crate::training::TrainingConfig;
use crate::{Error, Result};

/// Architecture axes searched per split. The default is the full 2x2x2x2 grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub hidden_dim: Vec<usize>,
    pub heads: Vec<usize>,
    pub layers: Vec<usize>,
    pub classifier: Vec<ClassifierShape>,
    pub dropout: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            hidden_dim: vec![128, 256],
            heads: vec![1, 2],
            layers: vec![1, 2],
            classifier: vec![ClassifierShape::Hidden(128), ClassifierShape::Linear],
            dropout: 0.5,
        }
    }
}

impl GridConfig {
    /// Every combination, hidden size varying slowest.
    pub fn points(&self, token_width: usize) -> Vec<ModelConfig> {
        let mut out = Vec::new();
        for &d in &self.hidden_dim {
            for &h in &self.heads {
                for &l in &self.layers {
                    for &c in &self.classifier {
                        out.push(ModelConfig { dropout: self.dropout, ..ModelConfig::new(token_width, d, h, l, c) });
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRow {
    pub history_start: i32,
    pub frequency: Frequency,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// Train on baseline reference visits only.
    pub no_expansion: bool,
    /// Score every eligible (subject, reference visit) pair instead of pseudo sets.
    pub no_bias_reduction: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub schema: FeatureSchema,
    /// JSONL cohort to load; when absent a synthetic cohort is generated.
    pub cohort_path: Option<PathBuf>,
    pub generator: GeneratorConfig,
    pub n_splits: usize,
    pub test_fraction: f64,
    pub k_folds: usize,
    pub seeds_per_fold: usize,
    pub grid: GridConfig,
    pub training: TrainingConfig,
    pub scenarios: Vec<ScenarioRow>,
    pub modality_cases: Vec<ModalityCase>,
    pub follow_up_years: u32,
    pub n_pseudo: usize,
    pub ablation: Ablation,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            schema: FeatureSchema::synthetic_default(),
            cohort_path: None,
            generator: GeneratorConfig::default(),
            n_splits: 10,
            test_fraction: 0.2,
            k_folds: 5,
            seeds_per_fold: 5,
            grid: GridConfig::default(),
            training: TrainingConfig::default(),
            scenarios: ScenarioSpec::standard_rows(&ModalityCase::complete())
                .into_iter()
                .map(|s| ScenarioRow { history_start: s.history_start, frequency: s.frequency })
                .collect(),
            modality_cases: vec![ModalityCase::complete()],
            follow_up_years: 5,
            n_pseudo: 20,
            ablation: Ablation::default(),
            out_dir: PathBuf::from("runs/default"),
        }
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        self.training.validate()?;
        if self.cohort_path.is_none() {
            self.generator.validate()?;
        }
        let counts = [
            ("n_splits", self.n_splits),
            ("k_folds", self.k_folds),
            ("seeds_per_fold", self.seeds_per_fold),
            ("n_pseudo", self.n_pseudo),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, n)| *n == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("test fraction {} outside (0, 1)", self.test_fraction)));
        }
        if !(1..=crate::training::MAX_HORIZON).contains(&self.follow_up_years) {
            return Err(Error::Config(format!("follow-up years {} outside 1..=5", self.follow_up_years)));
        }
        let points = self.grid.points(self.schema.token_width());
        if points.is_empty() {
            return Err(Error::Config("the architecture grid is empty".into()));
        }
        for p in &points {
            p.validate()?;
        }
        if self.scenarios.is_empty() || self.modality_cases.is_empty() {
            return Err(Error::Config("at least one scenario and one modality case are required".into()));
        }
        self.scenario_specs()?;
        Ok(())
    }

    /// Scenario rows crossed with modality cases, cases varying slowest.
    pub fn scenario_specs(&self) -> Result<Vec<ScenarioSpec>> {
        let mut out = Vec::new();
        for case in &self.modality_cases {
            for row in &self.scenarios {
                out.push(ScenarioSpec::new(row.history_start, row.frequency, case.clone())?);
            }
        }
        Ok(out)
    }

    fn hash_of(value: &Self) -> String {
        sha256_hex(serde_json::to_string(value).expect("config serializes").as_bytes())
    }

    /// Hash of everything but the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        Self::hash_of(&c)
    }

    /// Hash of the settings that determine trained models. Evaluation-only
    /// settings and the split count are neutralized.
    pub fn training_fingerprint(&self) -> String {
        let defaults = ExperimentConfig::default();
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.n_splits = 0;
        c.scenarios = defaults.scenarios;
        c.modality_cases = defaults.modality_cases;
        c.follow_up_years = defaults.follow_up_years;
        c.n_pseudo = defaults.n_pseudo;
        c.ablation.no_bias_reduction = false;
        Self::hash_of(&c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_sixteen_points() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.grid.points(cfg.schema.token_width()).len(), 16);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn toml_overrides_and_fingerprints() {
        let text = r#"
            master_seed = 3
            n_splits = 2
            k_folds = 2
            seeds_per_fold = 1
            n_pseudo = 4
            [grid]
            hidden_dim = [16]
            heads = [2]
            layers = [1]
            classifier = [[3]]
            [training]
            max_epochs = 5
            [generator]
            n_subjects = 100
            [ablation]
            no_bias_reduction = true
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.grid.points(cfg.schema.token_width()).len(), 1);
        assert_eq!(cfg.training.max_epochs, 5);
        assert_eq!(cfg.training.batch_size, 32);
        let mut other = cfg.clone();
        other.ablation.no_bias_reduction = false;
        other.n_pseudo = 50;
        other.out_dir = "elsewhere".into();
        assert_eq!(cfg.training_fingerprint(), other.training_fingerprint());
        assert_ne!(cfg.hash(), other.hash());
        other.ablation.no_expansion = true;
        assert_ne!(cfg.training_fingerprint(), other.training_fingerprint());
        assert!(ExperimentConfig::from_toml_str("k_folds = 0").is_err());
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
    }
}
