use serde::{Deserialize, Serialize};

use super::{FeatureKind, FeatureSchema};
use crate::cohort::{RawValue, VisitRecord};

const CONSTANT_STD: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FeatureStats {
    Numeric { mean: f64, std: f64, constant: bool },
    /// Index into the descriptor's categories.
    Categorical { mode: usize },
    /// Ordinal stage value (CN = 0, MCI = 1).
    Diagnosis { mode: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputationStats {
    /// Parallel to the schema's descriptors.
    pub features: Vec<FeatureStats>,
    /// Names of features never observed in the training visits.
    pub degenerate: Vec<String>,
    pub age_mean: f64,
    pub age_std: f64,
}

impl ImputationStats {
    /// Standardizes an age in years; constant ages map to 0.
    pub fn age_z(&self, age: f64) -> f64 {
        if self.age_std > CONSTANT_STD {
            (age - self.age_mean) / self.age_std
        } else {
            0.0
        }
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Fits imputation and normalization statistics on training visits only.
/// Standard deviations use the population (N) convention; categorical ties go
/// to the earliest category in schema order.
pub fn fit_imputation_stats<'a, I>(train_visits: I, schema: &FeatureSchema) -> ImputationStats
where
    I: IntoIterator<Item = &'a VisitRecord>,
{
    let visits: Vec<&VisitRecord> = train_visits.into_iter().collect();
    let mut degenerate = Vec::new();
    let mut features = Vec::with_capacity(schema.features.len());
    for f in &schema.features {
        let stat = match f.kind {
            FeatureKind::Numeric => {
                let values: Vec<f64> = visits
                    .iter()
                    .filter_map(|v| v.features.get(&f.name))
                    .filter(|fv| fv.observed)
                    .filter_map(|fv| match fv.value {
                        Some(RawValue::Number(x)) => Some(x),
                        _ => None,
                    })
                    .collect();
                if values.is_empty() {
                    degenerate.push(f.name.clone());
                    FeatureStats::Numeric { mean: 0.0, std: 0.0, constant: true }
                } else {
                    let (mean, std) = mean_std(&values);
                    FeatureStats::Numeric { mean, std, constant: std <= CONSTANT_STD }
                }
            }
            FeatureKind::Categorical => {
                let mut counts = vec![0usize; f.categories.len()];
                for fv in visits.iter().filter_map(|v| v.features.get(&f.name)).filter(|fv| fv.observed) {
                    if let Some(RawValue::Category(c)) = &fv.value {
                        if let Some(k) = f.categories.iter().position(|x| x == c) {
                            counts[k] += 1;
                        }
                    }
                }
                if counts.iter().all(|&c| c == 0) {
                    degenerate.push(f.name.clone());
                }
                // First maximal count wins.
                let mode = counts
                    .iter()
                    .enumerate()
                    .fold((0, 0), |best, (k, &c)| if c > best.1 { (k, c) } else { best })
                    .0;
                FeatureStats::Categorical { mode }
            }
            FeatureKind::Diagnosis => {
                let mut counts = [0usize; 3];
                for d in visits.iter().filter_map(|v| v.diagnosis) {
                    counts[d.index()] += 1;
                }
                if counts.iter().all(|&c| c == 0) {
                    degenerate.push(f.name.clone());
                }
                let mode = counts
                    .iter()
                    .enumerate()
                    .fold((0, 0), |best, (k, &c)| if c > best.1 { (k, c) } else { best })
                    .0;
                FeatureStats::Diagnosis { mode: mode as f64 }
            }
        };
        features.push(stat);
    }
    for name in &degenerate {
        log::warn!("feature `{name}` is never observed in training visits; imputing a constant");
    }
    let ages: Vec<f64> = visits.iter().filter_map(|v| v.age).collect();
    let (age_mean, age_std) = if ages.is_empty() { (0.0, 0.0) } else { mean_std(&ages) };
    ImputationStats { features, degenerate, age_mean, age_std }
}
