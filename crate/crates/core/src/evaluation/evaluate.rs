use ndarray::Array2;

use super::{
    compute_metrics, eligible_instances, ensemble_predict, pseudo_choices, restrict_history, summarize, EligibleSet,
    Ensemble, MetricSummary, MetricValues, ScenarioSpec,
};
use crate::cohort::{Diagnosis, SubjectHistory};
use crate::features::VisitTable;
use crate::model::N_CLASSES;
use crate::{Error, Result};

pub const DEFAULT_ECE_BINS: usize = 10;

/// The class whose conversion is forecast for a baseline group.
pub fn positive_class(group: Diagnosis) -> Result<Diagnosis> {
    match group {
        Diagnosis::CN => Ok(Diagnosis::MCI),
        Diagnosis::MCI => Ok(Diagnosis::AD),
        Diagnosis::AD => Err(Error::Config("AD is not an evaluated group".into())),
    }
}

/// Ensemble probabilities for every eligible instance under `spec`, in the
/// layout of `set.per_subject`. Instances whose restricted history is empty
/// get `None`.
pub fn predict_eligible(
    ensemble: &Ensemble,
    table: &VisitTable,
    set: &EligibleSet,
    spec: &ScenarioSpec,
) -> Result<Vec<Vec<Option<[f64; N_CLASSES]>>>> {
    if table.case().to_string() != spec.case.to_string() {
        return Err(Error::Config(format!("visit table encodes case {} but the scenario asks for {}", table.case(), spec.case)));
    }
    let restricted: Vec<Vec<Vec<u32>>> = set
        .per_subject
        .iter()
        .map(|inst| inst.iter().map(|i| restrict_history(&i.history, i.now_year, spec)).collect())
        .collect();
    let mut requests = Vec::new();
    for (inst, hist) in set.per_subject.iter().zip(&restricted) {
        for (i, h) in inst.iter().zip(hist) {
            if !h.is_empty() {
                requests.push((i.subject_id.as_str(), h.as_slice(), i.now_year, i.target_year));
            }
        }
    }
    let probs = if requests.is_empty() {
        Array2::zeros((0, N_CLASSES))
    } else {
        ensemble_predict(ensemble, table, &requests)?
    };
    let mut row = 0;
    let mut out = Vec::with_capacity(set.per_subject.len());
    for hist in &restricted {
        let mut preds = Vec::with_capacity(hist.len());
        for h in hist {
            if h.is_empty() {
                preds.push(None);
            } else {
                let r = probs.row(row);
                preds.push(Some([r[0], r[1], r[2]]));
                row += 1;
            }
        }
        out.push(preds);
    }
    let skipped = restricted.iter().flatten().filter(|h| h.is_empty()).count();
    if skipped > 0 {
        log::warn!("{skipped} instances have no visit under scenario {spec}");
    }
    Ok(out)
}

fn metrics_for<'a>(
    rows: impl Iterator<Item = (Diagnosis, &'a [f64; N_CLASSES])>,
    positive: Diagnosis,
    ece_bins: usize,
) -> MetricValues {
    let mut flat = Vec::new();
    let mut labels = Vec::new();
    for (target, p) in rows {
        flat.extend_from_slice(p);
        labels.push(target == positive);
    }
    let probs = Array2::from_shape_vec((labels.len(), N_CLASSES), flat).expect("rows of three");
    compute_metrics(probs.view(), &labels, positive, ece_bins)
}

/// Metrics of one pseudo set given by one chosen instance index per subject.
pub fn pseudo_set_metrics(
    set: &EligibleSet,
    preds: &[Vec<Option<[f64; N_CLASSES]>>],
    choice: &[usize],
    ece_bins: usize,
) -> Result<MetricValues> {
    let positive = positive_class(set.group)?;
    let rows = set.per_subject.iter().zip(preds).zip(choice).filter_map(|((inst, p), &k)| {
        p[k].as_ref().map(|probs| (inst[k].target, probs))
    });
    Ok(metrics_for(rows, positive, ece_bins))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioEvaluation {
    /// Metric values per pseudo set.
    pub per_set: Vec<MetricValues>,
    /// Mean and standard error over pseudo sets, indexed like [`MetricValues`].
    pub summary: [MetricSummary; 6],
    pub n_subjects: usize,
}

/// Scores `n_pseudo` pseudo test sets drawn with `seed`. Reusing a seed across
/// scenarios evaluates every scenario on the same pseudo sets.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_scenario(
    ensemble: &Ensemble,
    table: &VisitTable,
    subjects: &[SubjectHistory],
    group: Diagnosis,
    year: u32,
    spec: &ScenarioSpec,
    n_pseudo: usize,
    seed: u64,
) -> Result<ScenarioEvaluation> {
    let set = eligible_instances(subjects, group, year);
    if set.per_subject.is_empty() {
        return Err(Error::EmptyPseudoSet { group: group.to_string(), year });
    }
    let preds = predict_eligible(ensemble, table, &set, spec)?;
    let per_set = pseudo_choices(&set, n_pseudo, seed)
        .iter()
        .map(|c| pseudo_set_metrics(&set, &preds, c, DEFAULT_ECE_BINS))
        .collect::<Result<Vec<_>>>()?;
    let summary = std::array::from_fn(|m| summarize(&per_set.iter().map(|v| v[m]).collect::<Vec<_>>()));
    Ok(ScenarioEvaluation { per_set, summary, n_subjects: set.per_subject.len() })
}

/// Metrics over every eligible (subject, reference visit) pair at once, and
/// the number of pairs scored.
pub fn evaluate_without_bias_reduction(
    ensemble: &Ensemble,
    table: &VisitTable,
    subjects: &[SubjectHistory],
    group: Diagnosis,
    year: u32,
    spec: &ScenarioSpec,
) -> Result<(MetricValues, usize)> {
    let set = eligible_instances(subjects, group, year);
    if set.per_subject.is_empty() {
        return Err(Error::EmptyPseudoSet { group: group.to_string(), year });
    }
    let preds = predict_eligible(ensemble, table, &set, spec)?;
    all_pairs_metrics(&set, &preds, DEFAULT_ECE_BINS)
}

/// Metrics over every instance with a prediction, and the number of instances.
pub fn all_pairs_metrics(
    set: &EligibleSet,
    preds: &[Vec<Option<[f64; N_CLASSES]>>],
    ece_bins: usize,
) -> Result<(MetricValues, usize)> {
    let positive = positive_class(set.group)?;
    let rows: Vec<(Diagnosis, &[f64; N_CLASSES])> = set
        .per_subject
        .iter()
        .zip(preds)
        .flat_map(|(inst, p)| inst.iter().zip(p).filter_map(|(i, p)| p.as_ref().map(|p| (i.target, p))))
        .collect();
    let n = rows.len();
    Ok((metrics_for(rows.into_iter(), positive, ece_bins), n))
}
