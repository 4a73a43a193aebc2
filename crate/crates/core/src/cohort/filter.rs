use serde::{Deserialize, Serialize};

use super::{Diagnosis, SubjectHistory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExclusionRule {
    AdAtBaseline,
    CnToAd,
    CnMciReversion,
    MciReversion,
    NoFollowUp,
}

impl ExclusionRule {
    /// Rules in evaluation order. A subject is attributed to the first match.
    pub const ORDER: [ExclusionRule; 5] = [
        ExclusionRule::AdAtBaseline,
        ExclusionRule::CnToAd,
        ExclusionRule::CnMciReversion,
        ExclusionRule::MciReversion,
        ExclusionRule::NoFollowUp,
    ];

    pub fn applies(self, subject: &SubjectHistory) -> bool {
        let base = subject.baseline_diagnosis;
        let later = || {
            subject
                .visits
                .iter()
                .filter(|v| v.year > 0)
                .filter_map(|v| v.diagnosis)
        };
        match self {
            ExclusionRule::AdAtBaseline => base == Diagnosis::AD,
            ExclusionRule::CnToAd => base == Diagnosis::CN && later().any(|d| d == Diagnosis::AD),
            ExclusionRule::CnMciReversion => {
                base == Diagnosis::CN && {
                    let mut seen_mci = false;
                    later().any(|d| {
                        seen_mci |= d == Diagnosis::MCI;
                        seen_mci && d == Diagnosis::CN
                    })
                }
            }
            ExclusionRule::MciReversion => base == Diagnosis::MCI && later().any(|d| d == Diagnosis::CN),
            ExclusionRule::NoFollowUp => later().next().is_none(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionCounts {
    pub ad_at_baseline: usize,
    pub cn_to_ad: usize,
    pub cn_mci_reversion: usize,
    pub mci_reversion: usize,
    pub no_follow_up: usize,
    /// Subjects without a diagnosed year-0 visit.
    pub malformed: usize,
}

impl ExclusionCounts {
    fn bump(&mut self, rule: ExclusionRule) {
        match rule {
            ExclusionRule::AdAtBaseline => self.ad_at_baseline += 1,
            ExclusionRule::CnToAd => self.cn_to_ad += 1,
            ExclusionRule::CnMciReversion => self.cn_mci_reversion += 1,
            ExclusionRule::MciReversion => self.mci_reversion += 1,
            ExclusionRule::NoFollowUp => self.no_follow_up += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.ad_at_baseline
            + self.cn_to_ad
            + self.cn_mci_reversion
            + self.mci_reversion
            + self.no_follow_up
            + self.malformed
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Cohort {
    pub subjects: Vec<SubjectHistory>,
    pub exclusions: ExclusionCounts,
    /// `(subject id, diagnostic)` for subjects rejected as malformed.
    pub rejected: Vec<(String, String)>,
    /// Last year on the grid; labels are carried forward up to this year.
    pub max_year: u32,
}

impl Cohort {
    pub fn subject(&self, id: &str) -> Option<&SubjectHistory> {
        self.subjects.iter().find(|s| s.subject_id == id)
    }

    /// Subjects whose ids are in `ids`, in cohort order.
    pub fn select(&self, ids: &[String]) -> Vec<SubjectHistory> {
        let wanted: std::collections::BTreeSet<&str> = ids.iter().map(String::as_str).collect();
        self.subjects
            .iter()
            .filter(|s| wanted.contains(s.subject_id.as_str()))
            .cloned()
            .collect()
    }
}

fn malformed_reason(subject: &SubjectHistory) -> Option<String> {
    let Some(first) = subject.visits.first() else {
        return Some("no visits".into());
    };
    if first.year != 0 {
        return Some(format!("first visit at year {}, no baseline visit", first.year));
    }
    if first.diagnosis != Some(subject.baseline_diagnosis) {
        return Some("baseline visit diagnosis missing or inconsistent".into());
    }
    if subject.visits.windows(2).any(|w| w[0].year >= w[1].year) {
        return Some("visit years not strictly increasing".into());
    }
    None
}

/// Applies the inclusion and exclusion rules. `max_year` of the result is the
/// last visit year over all input subjects.
pub fn filter_cohort(subjects: Vec<SubjectHistory>) -> Cohort {
    let max_year = subjects.iter().map(SubjectHistory::last_year).max().unwrap_or(0);
    let mut cohort = Cohort { max_year, ..Default::default() };
    for subject in subjects {
        if let Some(reason) = malformed_reason(&subject) {
            log::warn!("rejecting subject {}: {reason}", subject.subject_id);
            cohort.exclusions.malformed += 1;
            cohort.rejected.push((subject.subject_id, reason));
            continue;
        }
        match ExclusionRule::ORDER.into_iter().find(|r| r.applies(&subject)) {
            Some(rule) => cohort.exclusions.bump(rule),
            None => cohort.subjects.push(subject),
        }
    }
    cohort
}
