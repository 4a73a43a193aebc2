use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cohort::{carry_forward_labels, Diagnosis, SubjectHistory};

/// Years after the reference visit that are forecast.
pub const MAX_HORIZON: u32 = 5;
/// Years before the reference visit that may contribute history.
pub const MAX_LOOKBACK: u32 = 3;

/// Baseline group crossed with whether the target lies beyond the baseline stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SampleGroup {
    pub baseline: Diagnosis,
    pub converter: bool,
}

impl fmt::Display for SampleGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = if self.converter { "converter" } else { "stable" };
        write!(f, "{}-{kind}", self.baseline)
    }
}

/// One (reference visit, target year) training instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub subject_id: String,
    pub now_year: u32,
    /// Present visit years within `now - 3 ..= now`, ascending.
    pub history: Vec<u32>,
    pub target_year: u32,
    pub target: Diagnosis,
    pub group: SampleGroup,
    pub weight: f64,
}

impl TrajectorySample {
    pub fn delta_t(&self) -> u32 {
        self.target_year - self.now_year
    }
}

fn expand_subject(subject: &SubjectHistory, baseline_only: bool, out: &mut Vec<TrajectorySample>) {
    let labels = carry_forward_labels(subject, subject.last_year() + MAX_HORIZON);
    for now in &subject.visits {
        if baseline_only && now.year != 0 {
            continue;
        }
        let eligible = |d: Option<Diagnosis>| matches!(d, Some(Diagnosis::CN | Diagnosis::MCI));
        if !eligible(now.diagnosis) || !eligible(labels.get(now.year)) {
            continue;
        }
        let history: Vec<u32> = subject
            .visits
            .iter()
            .map(|v| v.year)
            .filter(|&y| y <= now.year && y + MAX_LOOKBACK >= now.year)
            .collect();
        for target_year in now.year + 1..=now.year + MAX_HORIZON {
            let Some(target) = labels.get(target_year) else { continue };
            out.push(TrajectorySample {
                subject_id: subject.subject_id.clone(),
                now_year: now.year,
                history: history.clone(),
                target_year,
                target,
                group: SampleGroup { baseline: subject.baseline_diagnosis, converter: target > subject.baseline_diagnosis },
                weight: 1.0,
            });
        }
    }
}

/// Every diagnosed CN or MCI visit becomes a reference point, paired with each
/// of the following five years that carries a label.
pub fn expand_dataset(subjects: &[SubjectHistory]) -> Vec<TrajectorySample> {
    let mut out = Vec::new();
    for s in subjects {
        expand_subject(s, false, &mut out);
    }
    out
}

/// Like [`expand_dataset`] but only the baseline visit serves as reference.
pub fn expand_dataset_ablated(subjects: &[SubjectHistory]) -> Vec<TrajectorySample> {
    let mut out = Vec::new();
    for s in subjects {
        expand_subject(s, true, &mut out);
    }
    out
}

/// Sets `weight = T / (C * n_cell)` over (group, follow-up year) cells, so every
/// nonempty cell carries the same total weight and the weights sum to `T`.
pub fn compute_sample_weights(samples: &mut [TrajectorySample]) {
    let mut counts: BTreeMap<(SampleGroup, u32), usize> = BTreeMap::new();
    for s in samples.iter() {
        *counts.entry((s.group, s.delta_t())).or_default() += 1;
    }
    let total = samples.len() as f64;
    let cells = counts.len() as f64;
    for s in samples.iter_mut() {
        s.weight = total / (cells * counts[&(s.group, s.delta_t())] as f64);
    }
}

/// Ratio of expanded to baseline-only sample counts.
pub fn expansion_ratio(expanded: &[TrajectorySample], ablated: &[TrajectorySample]) -> f64 {
    if ablated.is_empty() {
        return f64::NAN;
    }
    expanded.len() as f64 / ablated.len() as f64
}
