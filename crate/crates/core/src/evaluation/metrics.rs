use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::cohort::Diagnosis;
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Auroc,
    BalancedAccuracy,
    Sensitivity,
    Specificity,
    Aupr,
    Ece,
}

impl Metric {
    pub const ALL: [Metric; 6] =
        [Metric::Auroc, Metric::BalancedAccuracy, Metric::Sensitivity, Metric::Specificity, Metric::Aupr, Metric::Ece];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Auroc => "auroc",
            Metric::BalancedAccuracy => "balanced_accuracy",
            Metric::Sensitivity => "sensitivity",
            Metric::Specificity => "specificity",
            Metric::Aupr => "aupr",
            Metric::Ece => "ece",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown metric `{s}`")))
    }
}

/// One value per [`Metric`], `None` where the metric is undefined.
pub type MetricValues = [Option<f64>; 6];

fn by_score_desc(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Groups of equal score, highest first, as (positives, negatives) counts.
fn tie_groups(scores: &[f64], labels: &[bool]) -> Vec<(u64, u64)> {
    let order = by_score_desc(scores);
    let mut groups: Vec<(u64, u64)> = Vec::new();
    let mut last: Option<f64> = None;
    for i in order {
        if last != Some(scores[i]) {
            groups.push((0, 0));
            last = Some(scores[i]);
        }
        let g = groups.last_mut().unwrap();
        if labels[i] {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    groups
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. `None` unless both classes are present.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let groups = tie_groups(scores, labels);
    let (p, n) = groups.iter().fold((0u64, 0u64), |acc, g| (acc.0 + g.0, acc.1 + g.1));
    if p == 0 || n == 0 {
        return None;
    }
    // Walk from the lowest scores up so `below` counts strictly lower negatives.
    let mut below = 0u64;
    let mut twice = 0u64;
    for &(gp, gn) in groups.iter().rev() {
        twice += 2 * gp * below + gp * gn;
        below += gn;
    }
    Some(twice as f64 / (2 * p * n) as f64)
}

/// Average precision: precision at each distinct score level weighted by the
/// recall gained there.
pub fn aupr(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let groups = tie_groups(scores, labels);
    let p: u64 = groups.iter().map(|g| g.0).sum();
    if p == 0 {
        return None;
    }
    let (mut tp, mut fp, mut ap) = (0u64, 0u64, 0.0);
    for (gp, gn) in groups {
        tp += gp;
        fp += gn;
        if gp > 0 {
            ap += (tp as f64 / (tp + fp) as f64) * (gp as f64 / p as f64);
        }
    }
    Some(ap)
}

/// Expected calibration error over `bins` equal-width bins of `[0, 1]`.
pub fn ece(scores: &[f64], labels: &[bool], bins: usize) -> f64 {
    let bins = bins.max(1);
    let mut count = vec![0usize; bins];
    let mut pos = vec![0usize; bins];
    let mut conf = vec![0.0; bins];
    for (&s, &y) in scores.iter().zip(labels) {
        let b = ((s * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        count[b] += 1;
        conf[b] += s;
        pos[b] += usize::from(y);
    }
    let n = scores.len() as f64;
    (0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let nb = count[b] as f64;
            (nb / n) * (pos[b] as f64 / nb - conf[b] / nb).abs()
        })
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdMetrics {
    pub balanced_accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

/// Positive prediction means the arg-max class is `positive`.
pub fn threshold_metrics(probs: ArrayView2<'_, f64>, labels: &[bool], positive: Diagnosis) -> ThresholdMetrics {
    let (mut tp, mut fn_, mut tn, mut fp) = (0usize, 0usize, 0usize, 0usize);
    for (row, &y) in probs.rows().into_iter().zip(labels) {
        let mut arg = 0;
        for (c, &p) in row.iter().enumerate() {
            if p > row[arg] {
                arg = c;
            }
        }
        let predicted = arg == positive.index();
        match (y, predicted) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
        }
    }
    let rate = |a: usize, b: usize| (a + b > 0).then(|| a as f64 / (a + b) as f64);
    let sensitivity = rate(tp, fn_);
    let specificity = rate(tn, fp);
    let balanced_accuracy = sensitivity.zip(specificity).map(|(a, b)| (a + b) / 2.0);
    ThresholdMetrics { balanced_accuracy, sensitivity, specificity }
}

/// All six metrics for one set of predictions.
pub fn compute_metrics(probs: ArrayView2<'_, f64>, labels: &[bool], positive: Diagnosis, ece_bins: usize) -> MetricValues {
    let scores: Vec<f64> = probs.column(positive.index()).to_vec();
    let t = threshold_metrics(probs, labels, positive);
    let mut out = [None; 6];
    out[Metric::Auroc.index()] = auroc(&scores, labels);
    out[Metric::BalancedAccuracy.index()] = t.balanced_accuracy;
    out[Metric::Sensitivity.index()] = t.sensitivity;
    out[Metric::Specificity.index()] = t.specificity;
    out[Metric::Aupr.index()] = aupr(&scores, labels);
    out[Metric::Ece.index()] = (!scores.is_empty()).then(|| ece(&scores, labels, ece_bins));
    out
}

/// Mean and standard error (sample standard deviation over `sqrt(n)`) of the
/// defined values; `n_absent` counts the undefined ones.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub n_absent: usize,
}

pub fn summarize(values: &[Option<f64>]) -> MetricSummary {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    let n = defined.len();
    let n_absent = values.len() - n;
    if n == 0 {
        return MetricSummary { mean: f64::NAN, stderr: f64::NAN, n, n_absent };
    }
    let mean = defined.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = defined.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    MetricSummary { mean, stderr, n, n_absent }
}
