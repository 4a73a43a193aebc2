use rand::Rng;

use crate::cohort::{carry_forward_labels, Diagnosis, SubjectHistory};
use crate::seed::rng_for;
use crate::training::{MAX_HORIZON, MAX_LOOKBACK};
use crate::{Error, Result};

/// A (subject, reference visit) pair whose diagnosis matches the group and
/// that has a label `year` years later.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EligibleInstance {
    pub subject_id: String,
    pub now_year: u32,
    /// Present visit years in `now - 3 ..= now`.
    pub history: Vec<u32>,
    pub target_year: u32,
    pub target: Diagnosis,
}

/// Eligible instances grouped by subject; subjects without any are left out.
#[derive(Clone, Debug, PartialEq)]
pub struct EligibleSet {
    pub group: Diagnosis,
    pub year: u32,
    pub per_subject: Vec<Vec<EligibleInstance>>,
}

impl EligibleSet {
    pub fn n_instances(&self) -> usize {
        self.per_subject.iter().map(Vec::len).sum()
    }
}

pub fn eligible_instances(subjects: &[SubjectHistory], group: Diagnosis, year: u32) -> EligibleSet {
    let mut per_subject = Vec::new();
    for s in subjects {
        let labels = carry_forward_labels(s, s.last_year() + MAX_HORIZON);
        let mut instances = Vec::new();
        for now in &s.visits {
            if now.diagnosis != Some(group) {
                continue;
            }
            let Some(target) = labels.get(now.year + year) else { continue };
            let history = s
                .visits
                .iter()
                .map(|v| v.year)
                .filter(|&y| y <= now.year && y + MAX_LOOKBACK >= now.year)
                .collect();
            instances.push(EligibleInstance {
                subject_id: s.subject_id.clone(),
                now_year: now.year,
                history,
                target_year: now.year + year,
                target,
            });
        }
        if !instances.is_empty() {
            per_subject.push(instances);
        }
    }
    EligibleSet { group, year, per_subject }
}

fn choose<R: Rng>(set: &EligibleSet, rng: &mut R) -> Vec<usize> {
    set.per_subject.iter().map(|inst| rng.random_range(0..inst.len())).collect()
}

/// `n` independent pseudo sets, each one uniformly chosen instance index per
/// subject, from a stream keyed by `seed`.
pub fn pseudo_choices(set: &EligibleSet, n: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = rng_for(seed, &[crate::seed::stream::PSEUDO]);
    (0..n).map(|_| choose(set, &mut rng)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PseudoTestSet {
    pub group: Diagnosis,
    pub year: u32,
    pub entries: Vec<EligibleInstance>,
}

/// One uniformly chosen eligible reference visit per subject.
pub fn build_pseudo_test_set<R: Rng>(
    subjects: &[SubjectHistory],
    group: Diagnosis,
    year: u32,
    rng: &mut R,
) -> Result<PseudoTestSet> {
    let set = eligible_instances(subjects, group, year);
    if set.per_subject.is_empty() {
        return Err(Error::EmptyPseudoSet { group: group.to_string(), year });
    }
    let picks = choose(&set, rng);
    let entries = set.per_subject.iter().zip(picks).map(|(inst, k)| inst[k].clone()).collect();
    Ok(PseudoTestSet { group, year, entries })
}
