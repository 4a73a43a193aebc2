use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{FeatureKind, FeatureSchema, FeatureStats, ImputationStats, Modality};
use crate::cohort::{FeatureValue, RawValue, VisitRecord};
use crate::{Error, Result};

/// Encoded feature block and mask block of one visit. Mask bits are 1 for
/// observed features.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedVisit {
    pub features: Vec<f64>,
    pub mask: Vec<f64>,
}

impl EncodedVisit {
    pub fn width(&self) -> usize {
        self.features.len() + self.mask.len()
    }

    /// `[features | mask]` as one block.
    pub fn to_block(&self) -> Vec<f64> {
        let mut block = Vec::with_capacity(self.width());
        block.extend_from_slice(&self.features);
        block.extend_from_slice(&self.mask);
        block
    }
}

fn mismatch(feature: &str, what: &str) -> Error {
    Error::Parse(format!("feature `{feature}`: expected a {what} value"))
}

pub fn encode_visit(visit: &VisitRecord, schema: &FeatureSchema, stats: &ImputationStats) -> Result<EncodedVisit> {
    if stats.features.len() != schema.features.len() {
        return Err(Error::Shape(format!(
            "stats cover {} features, schema has {}",
            stats.features.len(),
            schema.features.len()
        )));
    }
    let mut features = Vec::with_capacity(schema.encoded_width());
    let mut mask = Vec::with_capacity(schema.mask_width());
    for (f, stat) in schema.features.iter().zip(&stats.features) {
        let raw = match f.kind {
            FeatureKind::Diagnosis => None,
            _ => visit.features.get(&f.name).filter(|fv| fv.observed),
        };
        match (f.kind, stat) {
            (FeatureKind::Numeric, FeatureStats::Numeric { mean, std, constant }) => {
                let x = match raw {
                    Some(FeatureValue { value: Some(RawValue::Number(x)), .. }) => Some(*x),
                    Some(_) => return Err(mismatch(&f.name, "numeric")),
                    None => None,
                };
                let z = match x {
                    Some(x) if !*constant => (x - mean) / std,
                    _ => 0.0,
                };
                features.push(z);
                mask.push(if x.is_some() { 1.0 } else { 0.0 });
            }
            (FeatureKind::Categorical, FeatureStats::Categorical { mode }) => {
                let index = match raw {
                    Some(FeatureValue { value: Some(RawValue::Category(c)), .. }) => {
                        Some(f.categories.iter().position(|x| x == c).ok_or_else(|| Error::UnknownCategory {
                            feature: f.name.clone(),
                            value: c.clone(),
                        })?)
                    }
                    Some(_) => return Err(mismatch(&f.name, "categorical")),
                    None => None,
                };
                let k = index.unwrap_or(*mode);
                features.extend((0..f.categories.len()).map(|i| if i == k { 1.0 } else { 0.0 }));
                mask.push(if index.is_some() { 1.0 } else { 0.0 });
            }
            (FeatureKind::Diagnosis, FeatureStats::Diagnosis { mode }) => {
                match visit.diagnosis {
                    Some(d) => {
                        features.push(d.index() as f64);
                        mask.push(1.0);
                    }
                    None => {
                        features.push(*mode);
                        mask.push(0.0);
                    }
                }
            }
            _ => return Err(Error::Shape(format!("stats kind does not match feature `{}`", f.name))),
        }
    }
    Ok(EncodedVisit { features, mask })
}

/// Appends the horizon (years from the visit to the prediction target).
pub fn append_horizon(block: &EncodedVisit, horizon_years: i64) -> Result<Vec<f64>> {
    if horizon_years < 1 {
        return Err(Error::InvalidHorizon(horizon_years));
    }
    let mut token = block.to_block();
    token.push(horizon_years as f64);
    Ok(token)
}

/// Longitudinal modalities kept time-varying. Static features and the
/// diagnosis are never altered, so listing `STATIC` is allowed but inert.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ModalityCase {
    retained: BTreeSet<Modality>,
}

impl ModalityCase {
    pub fn new(retained: impl IntoIterator<Item = Modality>) -> Result<Self> {
        let retained: BTreeSet<_> = retained.into_iter().collect();
        if retained.is_empty() {
            return Err(Error::Config("modality case must retain at least one modality".into()));
        }
        Ok(Self { retained })
    }

    /// Every modality retained.
    pub fn complete() -> Self {
        Self { retained: Modality::ALL.into_iter().collect() }
    }

    pub fn retains(&self, m: Modality) -> bool {
        m == Modality::STATIC || self.retained.contains(&m)
    }

    pub fn is_complete(&self) -> bool {
        Modality::ALL.iter().all(|&m| self.retains(m))
    }
}

impl fmt::Display for ModalityCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_complete() {
            return f.write_str("COMPLETE");
        }
        let names: Vec<String> = self
            .retained
            .iter()
            .filter(|m| m.is_longitudinal())
            .map(|m| m.to_string())
            .collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for ModalityCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("complete") {
            return Ok(Self::complete());
        }
        let mods = s
            .split('+')
            .map(|part| match part.trim().to_ascii_uppercase().as_str() {
                "COGN" => Ok(Modality::COGN),
                "MRI" => Ok(Modality::MRI),
                "CSF" => Ok(Modality::CSF),
                "STATIC" => Ok(Modality::STATIC),
                other => Err(Error::Config(format!("unknown modality `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(mods)
    }
}

impl TryFrom<String> for ModalityCase {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModalityCase> for String {
    fn from(c: ModalityCase) -> String {
        c.to_string()
    }
}

/// Replaces every time-varying feature outside `case` with its training
/// mean or mode and marks it unobserved.
pub fn apply_modality_case(
    visit: &VisitRecord,
    case: &ModalityCase,
    schema: &FeatureSchema,
    stats: &ImputationStats,
) -> VisitRecord {
    let mut out = visit.clone();
    for (f, stat) in schema.features.iter().zip(&stats.features) {
        if f.kind == FeatureKind::Diagnosis || case.retains(f.modality) {
            continue;
        }
        let value = match stat {
            FeatureStats::Numeric { mean, .. } => Some(RawValue::Number(*mean)),
            FeatureStats::Categorical { mode } => Some(RawValue::Category(f.categories[*mode].clone())),
            FeatureStats::Diagnosis { .. } => None,
        };
        out.features.insert(f.name.clone(), FeatureValue { value, observed: false });
    }
    out
}
