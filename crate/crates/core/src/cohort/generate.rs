//! Synthetic cohort simulation.
//!
//! Each subject follows a two-state absorbing chain from its baseline stage
//! (CN -> MCI or MCI -> AD) with a constant annual hazard. Follow-up is cut at
//! a geometric dropout year, individual visits are skipped with a stage
//! dependent probability, and whole modalities go missing per visit.
//!
//! Longitudinal numeric features are `direction * magnitude * level(t)` plus a
//! persistent subject offset and visit noise. With the history signal enabled,
//! `level` ramps linearly over the `lead_years` before conversion, so the
//! change between visits carries information the current value alone does not
//! (the subject offset masks it).

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Diagnosis, FeatureValue, SubjectHistory, VisitRecord};
use crate::features::{FeatureKind, FeatureSchema, Modality};
use crate::seed::{rng_for, stream};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hazards {
    pub cn_to_mci: f64,
    pub mci_to_ad: f64,
}

impl Default for Hazards {
    fn default() -> Self {
        Self { cn_to_mci: 0.08, mci_to_ad: 0.15 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageProbs {
    pub cn: f64,
    pub mci: f64,
    pub ad: f64,
}

impl StageProbs {
    pub fn uniform(p: f64) -> Self {
        Self { cn: p, mci: p, ad: p }
    }

    pub fn get(&self, d: Diagnosis) -> f64 {
        match d {
            Diagnosis::CN => self.cn,
            Diagnosis::MCI => self.mci,
            Diagnosis::AD => self.ad,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModalityProbs {
    pub cogn: f64,
    pub mri: f64,
    pub csf: f64,
    #[serde(rename = "static")]
    pub static_: f64,
}

impl Default for ModalityProbs {
    fn default() -> Self {
        Self { cogn: 0.1, mri: 0.2, csf: 0.8, static_: 0.0 }
    }
}

impl ModalityProbs {
    pub fn zero() -> Self {
        Self { cogn: 0.0, mri: 0.0, csf: 0.0, static_: 0.0 }
    }

    pub fn get(&self, m: Modality) -> f64 {
        match m {
            Modality::COGN => self.cogn,
            Modality::MRI => self.mri,
            Modality::CSF => self.csf,
            Modality::STATIC => self.static_,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HistorySignal {
    /// Pre-conversion drift on longitudinal numerics.
    pub enabled: bool,
    pub lead_years: u32,
    /// Shift per stage, in units of the visit noise scale.
    pub magnitude: f64,
    /// Standard deviation of the persistent subject offset.
    pub subject_sd: f64,
    /// Fraction of offset variance shared across features of a subject.
    pub shared_fraction: f64,
    pub noise_sd: f64,
}

impl Default for HistorySignal {
    fn default() -> Self {
        Self {
            enabled: true,
            lead_years: 3,
            magnitude: 1.5,
            subject_sd: 1.0,
            shared_fraction: 0.8,
            noise_sd: 0.35,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_subjects: usize,
    /// Fraction of subjects starting CN; the rest start MCI except for
    /// `ad_baseline_fraction`.
    pub cn_fraction: f64,
    pub ad_baseline_fraction: f64,
    pub hazard: Hazards,
    pub dropout_hazard: f64,
    pub visit_skip: StageProbs,
    pub missingness: ModalityProbs,
    /// Probability that a follow-up diagnosis is recorded one stage off,
    /// producing reversions the cohort rules must exclude.
    pub misdiagnosis_prob: f64,
    pub max_follow_up: u32,
    pub baseline_age_mean: f64,
    pub baseline_age_sd: f64,
    pub history_signal: HistorySignal,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_subjects: 1500,
            cn_fraction: 0.45,
            ad_baseline_fraction: 0.0,
            hazard: Hazards::default(),
            dropout_hazard: 0.08,
            visit_skip: StageProbs { cn: 0.25, mci: 0.1, ad: 0.1 },
            missingness: ModalityProbs::default(),
            misdiagnosis_prob: 0.0,
            max_follow_up: 10,
            baseline_age_mean: 73.3,
            baseline_age_sd: 6.8,
            history_signal: HistorySignal::default(),
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("cn_fraction", self.cn_fraction),
            ("ad_baseline_fraction", self.ad_baseline_fraction),
            ("hazard.cn_to_mci", self.hazard.cn_to_mci),
            ("hazard.mci_to_ad", self.hazard.mci_to_ad),
            ("dropout_hazard", self.dropout_hazard),
            ("visit_skip.cn", self.visit_skip.cn),
            ("visit_skip.mci", self.visit_skip.mci),
            ("visit_skip.ad", self.visit_skip.ad),
            ("missingness.cogn", self.missingness.cogn),
            ("missingness.mri", self.missingness.mri),
            ("missingness.csf", self.missingness.csf),
            ("missingness.static", self.missingness.static_),
            ("misdiagnosis_prob", self.misdiagnosis_prob),
            ("history_signal.shared_fraction", self.history_signal.shared_fraction),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not a probability")));
            }
        }
        if self.cn_fraction + self.ad_baseline_fraction > 1.0 {
            return Err(Error::Config("cn_fraction + ad_baseline_fraction exceeds 1".into()));
        }
        if self.n_subjects == 0 {
            return Err(Error::Config("n_subjects must be at least 1".into()));
        }
        let s = &self.history_signal;
        if s.subject_sd < 0.0 || s.noise_sd < 0.0 || !s.magnitude.is_finite() {
            return Err(Error::Config("history_signal scales must be finite and non-negative".into()));
        }
        Ok(())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Latent stage path over `0..=horizon` and the conversion year, if any.
fn simulate_stages(
    base: Diagnosis,
    hazard: f64,
    horizon: u32,
    rng: &mut ChaCha8Rng,
) -> (Vec<Diagnosis>, Option<u32>) {
    let mut stages = vec![base; horizon as usize + 1];
    let mut converted = None;
    if let Some(next) = base.next() {
        for t in 1..=horizon {
            if rng.random::<f64>() < hazard {
                converted = Some(t);
                stages[t as usize..].fill(next);
                break;
            }
        }
    }
    (stages, converted)
}

fn simulate_subject(cfg: &GeneratorConfig, schema: &FeatureSchema, index: usize) -> SubjectHistory {
    let mut rng = rng_for(cfg.seed, &[stream::GENERATOR, index as u64]);
    let signal = &cfg.history_signal;

    let u: f64 = rng.random();
    let base = if u < cfg.cn_fraction {
        Diagnosis::CN
    } else if u < cfg.cn_fraction + cfg.ad_baseline_fraction {
        Diagnosis::AD
    } else {
        Diagnosis::MCI
    };
    let hazard = match base {
        Diagnosis::CN => cfg.hazard.cn_to_mci,
        Diagnosis::MCI => cfg.hazard.mci_to_ad,
        Diagnosis::AD => 0.0,
    };
    // Simulated past the follow-up window so drift ahead of late conversions shows.
    let horizon = cfg.max_follow_up + signal.lead_years;
    let (stages, conversion) = simulate_stages(base, hazard, horizon, &mut rng);

    let mut dropout_year = cfg.max_follow_up + 1;
    for t in 1..=cfg.max_follow_up {
        if rng.random::<f64>() < cfg.dropout_hazard {
            dropout_year = t;
            break;
        }
    }

    let baseline_age = cfg.baseline_age_mean + cfg.baseline_age_sd * normal(&mut rng);
    let shared = normal(&mut rng);

    // Per-feature persistent state, in schema order.
    let mut long_index = 0usize;
    let mut static_values = Vec::with_capacity(schema.features.len());
    let mut offsets = Vec::with_capacity(schema.features.len());
    let mut directions = Vec::with_capacity(schema.features.len());
    for f in &schema.features {
        let own = normal(&mut rng);
        let offset = signal.subject_sd
            * (signal.shared_fraction.sqrt() * shared + (1.0 - signal.shared_fraction).sqrt() * own);
        offsets.push(offset);
        let static_value = match f.kind {
            FeatureKind::Numeric => FeatureValue::number(normal(&mut rng)),
            FeatureKind::Categorical => {
                let k = rng.random_range(0..f.categories.len());
                FeatureValue::category(f.categories[k].clone())
            }
            FeatureKind::Diagnosis => FeatureValue::missing(),
        };
        static_values.push(static_value);
        if f.kind == FeatureKind::Numeric && f.modality.is_longitudinal() {
            directions.push(if long_index % 2 == 0 { 1.0 } else { -1.0 });
            long_index += 1;
        } else {
            directions.push(0.0);
        }
    }

    let level = |t: u32| -> f64 {
        let base_level = base.index() as f64;
        match conversion {
            None => base_level,
            Some(conv) if signal.enabled && signal.lead_years > 0 => {
                let lead = f64::from(signal.lead_years);
                let start = f64::from(conv) - lead;
                base_level + ((f64::from(t) - start) / lead).clamp(0.0, 1.0)
            }
            Some(conv) => base_level + if t >= conv { 1.0 } else { 0.0 },
        }
    };

    let subject_id = format!("S{index:05}");
    let mut visits = Vec::new();
    for t in 0..dropout_year.min(cfg.max_follow_up + 1) {
        let stage = stages[t as usize];
        if t > 0 && rng.random::<f64>() < cfg.visit_skip.get(stage) {
            continue;
        }
        let mut recorded = stage;
        if t > 0 && rng.random::<f64>() < cfg.misdiagnosis_prob {
            recorded = match stage {
                Diagnosis::CN => Diagnosis::MCI,
                Diagnosis::MCI => Diagnosis::CN,
                Diagnosis::AD => Diagnosis::MCI,
            };
        }
        let mut missing_modality = BTreeMap::new();
        for m in Modality::ALL {
            missing_modality.insert(m, rng.random::<f64>() < cfg.missingness.get(m));
        }
        let mut features = BTreeMap::new();
        for (i, f) in schema.features.iter().enumerate() {
            if f.kind == FeatureKind::Diagnosis {
                continue;
            }
            if missing_modality[&f.modality] {
                features.insert(f.name.clone(), FeatureValue::missing());
                continue;
            }
            let value = if !f.modality.is_longitudinal() {
                static_values[i].clone()
            } else {
                match f.kind {
                    FeatureKind::Numeric => {
                        // Offset shares the feature's direction so no contrast between
                        // features cancels it.
                        let x = directions[i] * (signal.magnitude * level(t) + offsets[i])
                            + signal.noise_sd * normal(&mut rng);
                        FeatureValue::number(x)
                    }
                    _ => {
                        let k = rng.random_range(0..f.categories.len());
                        FeatureValue::category(f.categories[k].clone())
                    }
                }
            };
            features.insert(f.name.clone(), value);
        }
        visits.push(VisitRecord {
            subject_id: subject_id.clone(),
            year: t,
            diagnosis: Some(recorded),
            age: Some(baseline_age + f64::from(t)),
            features,
        });
    }
    SubjectHistory { subject_id, baseline_diagnosis: base, visits }
}

/// Simulates `cfg.n_subjects` subjects. Each subject draws from its own seeded
/// stream, so the output is a pure function of `(cfg, schema)`.
pub fn generate_synthetic_cohort(cfg: &GeneratorConfig, schema: &FeatureSchema) -> Result<Vec<SubjectHistory>> {
    cfg.validate()?;
    schema.validate()?;
    Ok((0..cfg.n_subjects).map(|i| simulate_subject(cfg, schema, i)).collect())
}
