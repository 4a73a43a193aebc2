//! Longitudinal data model, cohort rules, and synthetic cohort generation.

mod filter;
mod generate;
pub mod io;
mod labels;
mod split;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use filter::{filter_cohort, Cohort, ExclusionCounts, ExclusionRule};
pub use generate::{
    generate_synthetic_cohort, GeneratorConfig, HistorySignal, Hazards, ModalityProbs, StageProbs,
};
pub use labels::{carry_forward_labels, LabelTrack};
pub use split::{kfold_partition, split_subjects, SubjectSplit};

/// Diagnostic stage. The derived order is the progression order CN < MCI < AD.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Diagnosis {
    CN,
    MCI,
    AD,
}

impl Diagnosis {
    pub const ALL: [Diagnosis; 3] = [Diagnosis::CN, Diagnosis::MCI, Diagnosis::AD];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Diagnosis::CN => "CN",
            Diagnosis::MCI => "MCI",
            Diagnosis::AD => "AD",
        }
    }

    /// The stage a subject converts into from this one, if any.
    pub fn next(self) -> Option<Self> {
        Self::from_index(self.index() + 1)
    }
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Raw feature value as recorded at a visit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawValue {
    Number(f64),
    Category(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureValue {
    pub value: Option<RawValue>,
    pub observed: bool,
}

impl FeatureValue {
    pub fn number(x: f64) -> Self {
        Self { value: Some(RawValue::Number(x)), observed: true }
    }

    pub fn category(c: impl Into<String>) -> Self {
        Self { value: Some(RawValue::Category(c.into())), observed: true }
    }

    pub fn missing() -> Self {
        Self { value: None, observed: false }
    }
}

/// One clinical visit on the integer-year grid relative to baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisitRecord {
    pub subject_id: String,
    pub year: u32,
    pub diagnosis: Option<Diagnosis>,
    /// Age at the visit in years, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<f64>,
    #[serde(default)]
    pub features: BTreeMap<String, FeatureValue>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectHistory {
    pub subject_id: String,
    pub baseline_diagnosis: Diagnosis,
    /// Year-ordered, strictly increasing.
    pub visits: Vec<VisitRecord>,
}

impl SubjectHistory {
    /// Builds a history from unordered visits of one subject. The baseline
    /// diagnosis is taken from the year-0 visit.
    pub fn from_visits(subject_id: impl Into<String>, mut visits: Vec<VisitRecord>) -> crate::Result<Self> {
        let subject_id = subject_id.into();
        visits.sort_by_key(|v| v.year);
        if visits.windows(2).any(|w| w[0].year == w[1].year) {
            return Err(crate::Error::Subject {
                subject_id,
                reason: "duplicate visit year".into(),
            });
        }
        let baseline_diagnosis = visits
            .first()
            .filter(|v| v.year == 0)
            .and_then(|v| v.diagnosis)
            .ok_or_else(|| crate::Error::Subject {
                subject_id: subject_id.clone(),
                reason: "no diagnosed baseline visit at year 0".into(),
            })?;
        Ok(Self { subject_id, baseline_diagnosis, visits })
    }

    pub fn visit(&self, year: u32) -> Option<&VisitRecord> {
        self.visits
            .binary_search_by_key(&year, |v| v.year)
            .ok()
            .map(|i| &self.visits[i])
    }

    pub fn last_year(&self) -> u32 {
        self.visits.last().map_or(0, |v| v.year)
    }

    /// Age at `year`: the visit's recorded age, else baseline age plus the offset.
    pub fn age_at(&self, year: u32) -> f64 {
        if let Some(age) = self.visit(year).and_then(|v| v.age) {
            return age;
        }
        self.visits
            .iter()
            .find_map(|v| v.age.map(|a| a - f64::from(v.year)))
            .map_or(0.0, |base| base + f64::from(year))
    }
}
