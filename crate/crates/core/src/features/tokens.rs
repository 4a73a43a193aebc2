use ndarray::Array2;

use super::{append_horizon, apply_modality_case, encode_visit, FeatureSchema, ImputationStats, ModalityCase};
use crate::cohort::VisitRecord;
use crate::{Error, Result};

/// Visits at `now - 3 ..= now`.
pub const MAX_HISTORY_TOKENS: usize = 4;

/// Model input for one history: one token per visit, oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSequence {
    width: usize,
    /// Row-major, `len() * width`.
    values: Vec<f64>,
    /// Age in years at each visit.
    pub ages: Vec<f64>,
    /// Years before the reference visit, `0..=3`.
    pub positions: Vec<usize>,
}

impl TokenSequence {
    pub fn new(width: usize) -> Self {
        Self { width, values: Vec::new(), ages: Vec::new(), positions: Vec::new() }
    }

    /// Adds a token built from an encoded block (`[features | mask]`) of a
    /// visit at `visit_year`.
    pub fn push_block(&mut self, block: &[f64], visit_year: u32, now_year: u32, target_year: u32, age: f64) -> Result<()> {
        if block.len() + 1 != self.width {
            return Err(Error::Shape(format!("block width {} for token width {}", block.len(), self.width)));
        }
        if visit_year > now_year || now_year - visit_year >= MAX_HISTORY_TOKENS as u32 {
            return Err(Error::Config(format!("visit year {visit_year} outside the history window of {now_year}")));
        }
        let horizon = i64::from(target_year) - i64::from(visit_year);
        if horizon < 1 {
            return Err(Error::InvalidHorizon(horizon));
        }
        if self.len() == MAX_HISTORY_TOKENS {
            return Err(Error::Shape("history longer than four visits".into()));
        }
        self.values.extend_from_slice(block);
        self.values.push(horizon as f64);
        self.ages.push(age);
        self.positions.push((now_year - visit_year) as usize);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn token(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    pub fn token_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.width..(i + 1) * self.width]
    }
}

/// Encodes a history for the target year. `visits` must all fall within the
/// three years before `now_year` (inclusive); the reference visit itself may be
/// absent.
pub fn build_token_sequence(
    visits: &[&VisitRecord],
    now_year: u32,
    target_year: u32,
    schema: &FeatureSchema,
    stats: &ImputationStats,
    case: &ModalityCase,
) -> Result<TokenSequence> {
    if visits.is_empty() {
        return Err(Error::EmptyHistory);
    }
    let mut ordered: Vec<&VisitRecord> = visits.to_vec();
    ordered.sort_by_key(|v| v.year);
    let mut seq = TokenSequence::new(schema.token_width());
    for v in ordered {
        let visit = apply_modality_case(v, case, schema, stats);
        let encoded = encode_visit(&visit, schema, stats)?;
        let token = append_horizon(&encoded, i64::from(target_year) - i64::from(v.year))?;
        seq.push_block(&token[..token.len() - 1], v.year, now_year, target_year, v.age.unwrap_or(0.0))?;
    }
    Ok(seq)
}

/// Sequences padded to a common length. Padded slots hold zero tokens at
/// position 0 and are marked invalid.
#[derive(Clone, Debug)]
pub struct TokenBatch {
    pub n_sequences: usize,
    pub max_len: usize,
    /// `(n_sequences * max_len) x width`.
    pub inputs: Array2<f64>,
    pub ages: Vec<f64>,
    pub positions: Vec<usize>,
    pub valid: Vec<bool>,
}

impl TokenBatch {
    pub fn from_sequences(seqs: &[&TokenSequence], pad_to: Option<usize>) -> Result<Self> {
        let width = seqs.first().map(|s| s.width()).ok_or_else(|| Error::Shape("empty batch".into()))?;
        let longest = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        let max_len = pad_to.unwrap_or(longest).max(longest);
        let rows = seqs.len() * max_len;
        let mut inputs = Array2::zeros((rows, width));
        let mut ages = vec![0.0; rows];
        let mut positions = vec![0; rows];
        let mut valid = vec![false; rows];
        for (b, s) in seqs.iter().enumerate() {
            if s.width() != width {
                return Err(Error::Shape("sequences of different token widths".into()));
            }
            if s.is_empty() {
                return Err(Error::EmptyHistory);
            }
            for i in 0..s.len() {
                let r = b * max_len + i;
                inputs.row_mut(r).as_slice_mut().unwrap().copy_from_slice(s.token(i));
                ages[r] = s.ages[i];
                positions[r] = s.positions[i];
                valid[r] = true;
            }
        }
        Ok(Self { n_sequences: seqs.len(), max_len, inputs, ages, positions, valid })
    }

    pub fn width(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn validity(&self, seq: usize) -> &[bool] {
        &self.valid[seq * self.max_len..(seq + 1) * self.max_len]
    }
}
