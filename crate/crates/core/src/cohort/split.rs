use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Diagnosis, SubjectHistory};
use crate::seed::rng_for;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectSplit {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

fn strata(subjects: &[SubjectHistory]) -> BTreeMap<Diagnosis, Vec<String>> {
    let mut out: BTreeMap<Diagnosis, Vec<String>> = BTreeMap::new();
    for s in subjects {
        out.entry(s.baseline_diagnosis).or_default().push(s.subject_id.clone());
    }
    for ids in out.values_mut() {
        ids.sort();
    }
    out
}

/// Subject-level split stratified by baseline diagnosis. Each stratum sends
/// `round(n * test_fraction)` subjects to test; strata with fewer than two
/// subjects stay whole in train.
pub fn split_subjects(subjects: &[SubjectHistory], test_fraction: f64, seed: u64) -> Result<SubjectSplit> {
    if subjects.is_empty() {
        return Err(Error::Config("cannot split an empty cohort".into()));
    }
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Config(format!("test fraction {test_fraction} outside [0, 1)")));
    }
    let mut split = SubjectSplit { train: Vec::new(), test: Vec::new() };
    for (dx, mut ids) in strata(subjects) {
        if ids.len() < 2 {
            log::warn!("stratum {dx} has {} subject(s); kept whole in train", ids.len());
            split.train.extend(ids);
            continue;
        }
        let mut rng = rng_for(seed, &[dx.index() as u64]);
        ids.shuffle(&mut rng);
        let n_test = (ids.len() as f64 * test_fraction).round() as usize;
        split.test.extend(ids.drain(..n_test));
        split.train.extend(ids);
    }
    split.train.sort();
    split.test.sort();
    Ok(split)
}

/// Partitions subjects into `k` disjoint folds. With `stratify`, each stratum
/// is dealt round-robin continuing from where the previous stratum stopped,
/// so per-stratum and total fold sizes both differ by at most one.
pub fn kfold_partition(subjects: &[SubjectHistory], k: usize, stratify: bool, seed: u64) -> Result<Vec<Vec<String>>> {
    if k < 2 {
        return Err(Error::Config(format!("k = {k}: need at least 2 folds")));
    }
    if k > subjects.len() {
        return Err(Error::Config(format!("k = {k} exceeds {} subjects", subjects.len())));
    }
    let groups: Vec<(u64, Vec<String>)> = if stratify {
        strata(subjects).into_iter().map(|(d, ids)| (d.index() as u64, ids)).collect()
    } else {
        let mut ids: Vec<String> = subjects.iter().map(|s| s.subject_id.clone()).collect();
        ids.sort();
        vec![(u64::MAX, ids)]
    };
    let mut folds = vec![Vec::new(); k];
    let mut next = 0usize;
    for (label, mut ids) in groups {
        let mut rng = rng_for(seed, &[label]);
        ids.shuffle(&mut rng);
        for id in ids {
            folds[next].push(id);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort();
    }
    Ok(folds)
}
