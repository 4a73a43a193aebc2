use std::collections::BTreeMap;

use super::{apply_modality_case, encode_visit, FeatureSchema, ImputationStats, ModalityCase, TokenSequence};
use crate::cohort::SubjectHistory;
use crate::{Error, Result};

#[derive(Clone, Debug)]
struct EncodedSubject {
    years: Vec<u32>,
    blocks: Vec<Vec<f64>>,
    ages: Vec<f64>,
}

/// Every visit of a set of subjects encoded once under one modality case, so
/// token sequences for any (history, target) can be assembled cheaply.
#[derive(Clone, Debug)]
pub struct VisitTable {
    token_width: usize,
    schema_hash: String,
    case: ModalityCase,
    subjects: BTreeMap<String, EncodedSubject>,
}

impl VisitTable {
    pub fn encode(
        subjects: &[SubjectHistory],
        schema: &FeatureSchema,
        stats: &ImputationStats,
        case: &ModalityCase,
    ) -> Result<Self> {
        let mut table = BTreeMap::new();
        for s in subjects {
            let mut enc = EncodedSubject { years: Vec::new(), blocks: Vec::new(), ages: Vec::new() };
            for v in &s.visits {
                let visit = apply_modality_case(v, case, schema, stats);
                enc.years.push(v.year);
                enc.blocks.push(encode_visit(&visit, schema, stats)?.to_block());
                enc.ages.push(s.age_at(v.year));
            }
            table.insert(s.subject_id.clone(), enc);
        }
        Ok(Self { token_width: schema.token_width(), schema_hash: schema.hash(), case: case.clone(), subjects: table })
    }

    pub fn token_width(&self) -> usize {
        self.token_width
    }

    pub fn schema_hash(&self) -> &str {
        &self.schema_hash
    }

    pub fn case(&self) -> &ModalityCase {
        &self.case
    }

    pub fn contains(&self, subject_id: &str) -> bool {
        self.subjects.contains_key(subject_id)
    }

    /// Tokens for the listed visit years (any order) of one subject.
    pub fn sequence(&self, subject_id: &str, years: &[u32], now_year: u32, target_year: u32) -> Result<TokenSequence> {
        let subject = self
            .subjects
            .get(subject_id)
            .ok_or_else(|| Error::Subject { subject_id: subject_id.to_string(), reason: "not encoded".into() })?;
        if years.is_empty() {
            return Err(Error::EmptyHistory);
        }
        let mut sorted = years.to_vec();
        sorted.sort_unstable();
        let mut seq = TokenSequence::new(self.token_width);
        for y in sorted {
            let i = subject.years.binary_search(&y).map_err(|_| Error::Subject {
                subject_id: subject_id.to_string(),
                reason: format!("no visit at year {y}"),
            })?;
            seq.push_block(&subject.blocks[i], y, now_year, target_year, subject.ages[i])?;
        }
        Ok(seq)
    }
}
