//! Evaluation: history scenarios crossed with modality cases, pseudo test
//! sets holding one reference visit per subject, ensemble prediction, and the
//! six reported metrics.

mod ensemble;
mod evaluate;
mod metrics;
mod pseudo;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use ensemble::{ensemble_predict, Ensemble};
pub use evaluate::{
    all_pairs_metrics, evaluate_scenario, evaluate_without_bias_reduction, pseudo_set_metrics, positive_class, predict_eligible,
    ScenarioEvaluation, DEFAULT_ECE_BINS,
};
pub use metrics::{
    aupr, auroc, compute_metrics, ece, summarize, threshold_metrics, Metric, MetricSummary, MetricValues,
    ThresholdMetrics,
};
pub use pseudo::{
    build_pseudo_test_set, eligible_instances, pseudo_choices, EligibleInstance, EligibleSet, PseudoTestSet,
};

use crate::features::ModalityCase;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Annual,
    Biennial,
}

impl Frequency {
    pub fn as_str(self) -> &'static str {
        match self {
            Frequency::Annual => "annual",
            Frequency::Biennial => "biennial",
        }
    }
}

impl FromStr for Frequency {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "annual" => Ok(Frequency::Annual),
            "biennial" => Ok(Frequency::Biennial),
            _ => Err(Error::Parse(format!("unknown frequency `{s}`"))),
        }
    }
}

/// Which history visits an evaluated forecast may see, and which modalities
/// remain longitudinal.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// Earliest year relative to the reference visit, `0` to `-3`.
    pub history_start: i32,
    pub frequency: Frequency,
    #[serde(default = "ModalityCase::complete")]
    pub case: ModalityCase,
}

impl ScenarioSpec {
    pub fn new(history_start: i32, frequency: Frequency, case: ModalityCase) -> Result<Self> {
        if !(-3..=0).contains(&history_start) {
            return Err(Error::Config(format!("history start {history_start} outside -3..=0")));
        }
        Ok(Self { history_start, frequency, case })
    }

    /// The five history rows that are reported by default: start 0, -1, -2
    /// and -3 collected annually, and start -2 collected biennially.
    pub fn standard_rows(case: &ModalityCase) -> Vec<ScenarioSpec> {
        [(0, Frequency::Annual), (-1, Frequency::Annual), (-2, Frequency::Annual), (-2, Frequency::Biennial), (-3, Frequency::Annual)]
            .into_iter()
            .map(|(start, frequency)| ScenarioSpec { history_start: start, frequency, case: case.clone() })
            .collect()
    }

    /// Years before the reference visit that the scenario admits.
    pub fn offsets(&self) -> Vec<u32> {
        let step = match self.frequency {
            Frequency::Annual => 1,
            Frequency::Biennial => 2,
        };
        (0..=self.history_start.unsigned_abs()).step_by(step).collect()
    }
}

impl fmt::Display for ScenarioSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({}) {}", self.history_start, self.frequency.as_str(), self.case)
    }
}

/// The visits of `history` (absolute years) admitted by `spec`.
pub fn restrict_history(history: &[u32], now_year: u32, spec: &ScenarioSpec) -> Vec<u32> {
    let offsets = spec.offsets();
    history.iter().copied().filter(|&y| y <= now_year && offsets.contains(&(now_year - y))).collect()
}

#[cfg(test)]
mod tests;
