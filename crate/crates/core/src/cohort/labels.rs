use super::{Diagnosis, SubjectHistory};

/// Per-year labels on the grid `0..=max_year`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelTrack {
    labels: Vec<Option<Diagnosis>>,
}

impl LabelTrack {
    pub fn get(&self, year: u32) -> Option<Diagnosis> {
        self.labels.get(year as usize).copied().flatten()
    }

    pub fn max_year(&self) -> u32 {
        self.labels.len().saturating_sub(1) as u32
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, Option<Diagnosis>)> + '_ {
        self.labels.iter().enumerate().map(|(y, &d)| (y as u32, d))
    }
}

/// Labels every year up to `max_year`. Before the first observed conversion a
/// year is labeled only if a diagnosed visit exists; from the conversion on,
/// every year carries the most advanced stage observed so far.
pub fn carry_forward_labels(subject: &SubjectHistory, max_year: u32) -> LabelTrack {
    let max_year = max_year.max(subject.last_year());
    let mut labels = vec![None; max_year as usize + 1];
    for v in &subject.visits {
        labels[v.year as usize] = v.diagnosis;
    }
    let base = subject.baseline_diagnosis;
    let mut reached: Option<Diagnosis> = None;
    for slot in labels.iter_mut() {
        match (*slot, reached) {
            (Some(d), None) if d > base => reached = Some(d),
            (Some(d), Some(r)) if d > r => reached = Some(d),
            _ => {}
        }
        if let Some(r) = reached {
            *slot = Some(r);
        }
    }
    LabelTrack { labels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::VisitRecord;
    use Diagnosis::*;

    fn subject(dx: &[(u32, Diagnosis)]) -> SubjectHistory {
        let visits = dx
            .iter()
            .map(|&(year, d)| VisitRecord {
                subject_id: "s".into(),
                year,
                diagnosis: Some(d),
                age: None,
                features: Default::default(),
            })
            .collect();
        SubjectHistory::from_visits("s", visits).unwrap()
    }

    #[test]
    fn converted_stage_persists_after_dropout() {
        let track = carry_forward_labels(&subject(&[(0, MCI), (1, MCI), (2, AD)]), 7);
        assert_eq!(track.get(1), Some(MCI));
        for y in 2..=7 {
            assert_eq!(track.get(y), Some(AD));
        }
    }

    #[test]
    fn stable_subject_gaps_stay_unlabeled() {
        let track = carry_forward_labels(&subject(&[(0, CN), (1, CN), (3, CN)]), 5);
        assert_eq!(track.get(1), Some(CN));
        assert_eq!(track.get(2), None);
        assert_eq!(track.get(3), Some(CN));
        assert_eq!(track.get(4), None);
    }

    #[test]
    fn conversion_year_itself_is_converted() {
        let track = carry_forward_labels(&subject(&[(0, CN), (1, MCI)]), 3);
        assert_eq!(track.get(1), Some(MCI));
        assert_eq!(track.get(3), Some(MCI));
    }

    #[test]
    fn gap_before_conversion_stays_unlabeled() {
        let track = carry_forward_labels(&subject(&[(0, MCI), (3, AD)]), 4);
        assert_eq!(track.get(1), None);
        assert_eq!(track.get(2), None);
        assert_eq!(track.get(4), Some(AD));
    }
}
