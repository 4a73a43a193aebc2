//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use ndarray::Array2;
use progcast::cohort::{Diagnosis, ExclusionRule, SubjectHistory, VisitRecord};
use progcast::evaluation::{pseudo_choices, EligibleSet};
use progcast::features::{TokenBatch, TokenSequence};
use progcast::model::{backward, forward, init_params, ClassifierShape, Mode, ModelConfig, ModelParams};
use progcast::training::{augment_sequence, SampleGroup, TrainingConfig, TrajectorySample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use Diagnosis::*;

pub fn visit(id: &str, year: u32, dx: Option<Diagnosis>) -> VisitRecord {
    VisitRecord { subject_id: id.into(), year, diagnosis: dx, age: Some(70.0 + f64::from(year)), features: BTreeMap::new() }
}

/// Subject with one diagnosed visit per `(year, dx)` entry; the first entry is the baseline.
pub fn subject(id: &str, dx: &[(u32, Diagnosis)]) -> SubjectHistory {
    SubjectHistory::from_visits(id, dx.iter().map(|&(y, d)| visit(id, y, Some(d))).collect()).unwrap()
}

/// Twelve hand-built subjects with the rule each one should trip.
pub fn filter_roster() -> Vec<(SubjectHistory, Option<ExclusionRule>)> {
    use ExclusionRule::*;
    let mut undiagnosed = subject("R10", &[(0, CN)]);
    undiagnosed.visits.push(visit("R10", 1, None));
    vec![
        (subject("R01", &[(0, CN), (1, CN), (2, CN)]), None),
        (subject("R02", &[(0, CN), (1, MCI), (2, AD)]), Some(CnToAd)),
        (subject("R03", &[(0, MCI), (1, MCI), (2, CN)]), Some(MciReversion)),
        (subject("R04", &[(0, MCI), (1, MCI), (2, AD), (3, AD)]), None),
        (subject("R05", &[(0, AD), (1, AD)]), Some(AdAtBaseline)),
        (subject("R06", &[(0, CN), (1, MCI), (2, CN)]), Some(CnMciReversion)),
        (subject("R07", &[(0, CN)]), Some(NoFollowUp)),
        (subject("R08", &[(0, MCI)]), Some(NoFollowUp)),
        (subject("R09", &[(0, CN), (1, CN), (3, MCI), (4, MCI)]), None),
        (undiagnosed, Some(NoFollowUp)),
        (subject("R11", &[(0, CN), (2, AD)]), Some(CnToAd)),
        (subject("R12", &[(0, MCI), (2, MCI), (5, MCI)]), None),
    ]
}

/// Random small histories: monotone stages with occasional reversions,
/// undiagnosed visits, and AD baselines, so every filter rule can fire.
pub fn random_toy_cohort(rng: &mut ChaCha8Rng, n: usize) -> Vec<SubjectHistory> {
    (0..n)
        .map(|i| {
            let id = format!("T{i:03}");
            let base = match rng.random_range(0..10) {
                0 => AD,
                1..=5 => CN,
                _ => MCI,
            };
            let mut stage = base;
            let mut visits = vec![visit(&id, 0, Some(base))];
            for year in 1..=8 {
                if rng.random::<f64>() < 0.4 {
                    continue;
                }
                if rng.random::<f64>() < 0.25 {
                    stage = stage.next().unwrap_or(stage);
                }
                let dx = match rng.random_range(0..20) {
                    0 => None,
                    1 => Diagnosis::from_index(stage.index().saturating_sub(1)),
                    _ => Some(stage),
                };
                visits.push(visit(&id, year, dx));
            }
            SubjectHistory::from_visits(id, visits).unwrap()
        })
        .collect()
}

/// Label at `year`: the most advanced stage beyond baseline diagnosed at or
/// before `year`, else the diagnosis observed at `year`.
pub fn oracle_label(s: &SubjectHistory, year: u32) -> Option<Diagnosis> {
    let reached = s
        .visits
        .iter()
        .filter(|v| v.year <= year)
        .filter_map(|v| v.diagnosis)
        .filter(|&d| d > s.baseline_diagnosis)
        .max();
    reached.or_else(|| s.visits.iter().find(|v| v.year == year).and_then(|v| v.diagnosis))
}

pub type SampleKey = (String, u32, Vec<u32>, u32, Diagnosis, SampleGroup);

pub fn sample_keys(samples: &[TrajectorySample]) -> Vec<SampleKey> {
    let mut keys: Vec<SampleKey> = samples
        .iter()
        .map(|s| (s.subject_id.clone(), s.now_year, s.history.clone(), s.target_year, s.target, s.group))
        .collect();
    keys.sort();
    keys
}

/// Enumerates every (reference visit, target year) pair directly from the definition.
pub fn brute_force_expansion(subjects: &[SubjectHistory], baseline_only: bool) -> Vec<SampleKey> {
    let mut out = Vec::new();
    for s in subjects {
        let years: Vec<u32> = s.visits.iter().map(|v| v.year).collect();
        for now in &s.visits {
            if baseline_only && now.year != 0 {
                continue;
            }
            let ok = |d: Option<Diagnosis>| d == Some(CN) || d == Some(MCI);
            if !ok(now.diagnosis) || !ok(oracle_label(s, now.year)) {
                continue;
            }
            let history: Vec<u32> = years.iter().copied().filter(|&y| y <= now.year && now.year - y <= 3).collect();
            for dt in 1..=5 {
                if let Some(target) = oracle_label(s, now.year + dt) {
                    let group = SampleGroup { baseline: s.baseline_diagnosis, converter: target != s.baseline_diagnosis };
                    out.push((s.subject_id.clone(), now.year, history.clone(), now.year + dt, target, group));
                }
            }
        }
    }
    out.sort();
    out
}

/// O(P * N) pairwise AUROC with half credit for ties.
pub fn pairwise_auroc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let (mut wins, mut ties, mut pairs) = (0u64, 0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                wins += 1;
            } else if scores[i] == scores[j] {
                ties += 1;
            }
        }
    }
    (pairs > 0).then(|| (2 * wins + ties) as f64 / (2 * pairs) as f64)
}

const TOY_WIDTH: usize = 6;

fn toy_sequence(rng: &mut ChaCha8Rng, len: usize) -> TokenSequence {
    let now = 3u32;
    let mut years: Vec<u32> = (0..=now).collect();
    while years.len() > len {
        years.remove(rng.random_range(0..years.len()));
    }
    let mut s = TokenSequence::new(TOY_WIDTH);
    for y in years {
        let block: Vec<f64> = (0..TOY_WIDTH - 1).map(|_| rng.random_range(-1.5..1.5)).collect();
        s.push_block(&block, y, now, now + rng.random_range(1..=5), 65.0 + rng.random_range(0.0..20.0)).unwrap();
    }
    s
}

/// Random sequences of one to four tokens on a narrow schema.
pub fn toy_sequences(seed: u64, n: usize) -> Vec<TokenSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| {
        let len = rng.random_range(1..=4);
        toy_sequence(&mut rng, len)
    }).collect()
}

pub fn toy_batch(seqs: &[TokenSequence], pad_to: Option<usize>) -> TokenBatch {
    let refs: Vec<&TokenSequence> = seqs.iter().collect();
    TokenBatch::from_sequences(&refs, pad_to).unwrap()
}

/// Initialized parameters with every entry jittered, so that zero-initialized
/// tables and biases also get exercised.
pub fn random_params(config: &ModelConfig, seed: u64) -> ModelParams {
    let mut p = init_params(config, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for s in p.slices_mut() {
        for v in s.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    p.set_age_scaling(72.0, 6.0);
    p
}

fn weighted_ce(probs: &Array2<f64>, labels: &[usize], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    labels.iter().zip(weights).enumerate().map(|(i, (&y, &w))| -w * probs[[i, y]].ln()).sum::<f64>() / total
}

fn weighted_ce_logit_grad(probs: &Array2<f64>, labels: &[usize], weights: &[f64]) -> Array2<f64> {
    let total: f64 = weights.iter().sum();
    let mut g = probs.clone();
    for (i, (&y, &w)) in labels.iter().zip(weights).enumerate() {
        g[[i, y]] -= 1.0;
        g.row_mut(i).mapv_inplace(|x| x * w / total);
    }
    g
}

pub struct GradCheck {
    pub checked: usize,
    pub max_rel_error: f64,
}

/// Central-difference check of the hand-written gradient of a weighted
/// cross-entropy on a `d = 8, h = 2, L = 1` model. The relative error is
/// `|a - f| / max(|a|, |f|, 1e-6)`; the floor keeps round-off on vanishing
/// coordinates from dominating.
pub fn finite_difference_check(seed: u64, coords: usize, eps: f64, classifier: ClassifierShape) -> GradCheck {
    let config = ModelConfig::new(TOY_WIDTH, 8, 2, 1, classifier);
    let mut params = random_params(&config, seed);
    let seqs = toy_sequences(seed + 1, 6);
    let batch = toy_batch(&seqs, Some(4));
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
    let labels: Vec<usize> = (0..seqs.len()).map(|_| rng.random_range(0..3)).collect();
    let weights: Vec<f64> = (0..seqs.len()).map(|_| rng.random_range(0.5..2.0)).collect();

    let (probs, trace) = forward(&params, &batch, Mode::Eval).unwrap();
    let analytic = backward(&params, &trace, &weighted_ce_logit_grad(&probs, &labels, &weights)).unwrap().to_flat();
    let base = params.to_flat();
    let mut order: Vec<usize> = (0..base.len()).collect();
    for i in 0..order.len() {
        let j = rng.random_range(i..order.len());
        order.swap(i, j);
    }
    let mut loss_at = |x: &[f64]| {
        params.assign_flat(x).unwrap();
        weighted_ce(&forward(&params, &batch, Mode::Eval).unwrap().0, &labels, &weights)
    };
    let mut max_rel_error: f64 = 0.0;
    let mut x = base.clone();
    for &idx in order.iter().take(coords) {
        x[idx] = base[idx] + eps;
        let up = loss_at(&x);
        x[idx] = base[idx] - eps;
        let down = loss_at(&x);
        x[idx] = base[idx];
        let fd = (up - down) / (2.0 * eps);
        let a = analytic[idx];
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
        max_rel_error = max_rel_error.max(rel);
    }
    GradCheck { checked: coords.min(base.len()), max_rel_error }
}

/// Largest change in output probabilities from extra padding or from scoring
/// sequences together instead of one at a time.
pub fn padding_and_batching_deviation(seed: u64) -> f64 {
    let config = ModelConfig::new(TOY_WIDTH, 8, 2, 2, ClassifierShape::Hidden(5));
    let params = random_params(&config, seed);
    let seqs = toy_sequences(seed + 7, 9);
    let eval = |b: &TokenBatch| forward(&params, b, Mode::Eval).unwrap().0;
    let tight = eval(&toy_batch(&seqs, None));
    let padded = eval(&toy_batch(&seqs, Some(4)));
    let mut worst = tight.iter().zip(padded.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    for (i, s) in seqs.iter().enumerate() {
        let alone = eval(&toy_batch(std::slice::from_ref(s), Some(4)));
        for c in 0..3 {
            worst = worst.max((alone[[0, c]] - tight[[i, c]]).abs());
        }
    }
    worst
}

pub struct AugmentRates {
    pub draws: usize,
    pub altered: f64,
    pub retention: [f64; 4],
}

/// Empirical augmentation rates on a four-visit history with default settings.
pub fn augmentation_rates(draws: usize, seed: u64) -> AugmentRates {
    let sample = TrajectorySample {
        subject_id: "A".into(),
        now_year: 3,
        history: vec![0, 1, 2, 3],
        target_year: 5,
        target: CN,
        group: SampleGroup { baseline: CN, converter: false },
        weight: 1.0,
    };
    let cfg = TrainingConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut altered = 0usize;
    let mut kept = [0usize; 4];
    for _ in 0..draws {
        let out = augment_sequence(&sample, &cfg, &mut rng);
        assert!(!out.history.is_empty());
        if out.history != sample.history {
            altered += 1;
        }
        for y in out.history {
            kept[y as usize] += 1;
        }
    }
    let n = draws as f64;
    AugmentRates { draws, altered: altered as f64 / n, retention: kept.map(|k| k as f64 / n) }
}

/// Closed forms with empty outcomes redrawn: with apply probability `a` and
/// drop probability 1/2 on four visits, each of the 15 nonempty subsets is
/// equally likely and a given visit survives in 8 of them.
pub fn augmentation_closed_form(a: f64) -> (f64, f64) {
    (a * 14.0 / 15.0, (1.0 - a) + a * 8.0 / 15.0)
}

/// `|empirical - p| / sigma` for a Bernoulli frequency over `n` draws.
pub fn z_score(empirical: f64, p: f64, n: usize) -> f64 {
    (empirical - p).abs() / (p * (1.0 - p) / n as f64).sqrt()
}

/// Per-subject selection frequencies over `n_sets` pseudo sets, and the
/// largest z-score against the uniform choice.
pub fn pseudo_selection_z(set: &EligibleSet, n_sets: usize, seed: u64) -> f64 {
    let choices = pseudo_choices(set, n_sets, seed);
    let mut worst: f64 = 0.0;
    for (s, inst) in set.per_subject.iter().enumerate() {
        let k = inst.len();
        if k < 2 {
            continue;
        }
        let mut counts = vec![0usize; k];
        for c in &choices {
            counts[c[s]] += 1;
        }
        for &c in &counts {
            worst = worst.max(z_score(c as f64 / n_sets as f64, 1.0 / k as f64, n_sets));
        }
    }
    worst
}

/// Subjects with several eligible CN reference visits one year before a label.
pub fn multi_now_cohort() -> Vec<SubjectHistory> {
    vec![
        subject("P1", &[(0, CN), (1, CN), (2, CN), (3, CN)]),
        subject("P2", &[(0, CN), (1, CN), (2, MCI)]),
        subject("P3", &[(0, CN), (2, CN), (3, CN), (4, CN), (5, CN), (6, CN)]),
        subject("P4", &[(0, CN), (1, CN)]),
    ]
}

/// A run small enough for integration tests: a few hundred subjects, one
/// tiny architecture, and a handful of epochs.
pub fn tiny_config(out_dir: &std::path::Path) -> progcast::experiments::ExperimentConfig {
    let mut cfg = progcast::experiments::ExperimentConfig::default();
    cfg.master_seed = 5;
    cfg.generator.n_subjects = 160;
    cfg.generator.seed = 3;
    cfg.n_splits = 2;
    cfg.k_folds = 2;
    cfg.seeds_per_fold = 2;
    cfg.n_pseudo = 4;
    cfg.grid.hidden_dim = vec![8];
    cfg.grid.heads = vec![2];
    cfg.grid.layers = vec![1];
    cfg.grid.classifier = vec![ClassifierShape::Linear];
    cfg.training.max_epochs = 3;
    cfg.training.patience = 1;
    cfg.out_dir = out_dir.to_path_buf();
    cfg
}

/// Random scores on a coarse grid so that ties are common.
pub fn random_scored_set(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.random_range(2..=200);
    let levels = rng.random_range(2..=40);
    let p = rng.random_range(0.05..0.95);
    let scores = (0..n).map(|_| f64::from(rng.random_range(0..levels)) / f64::from(levels)).collect();
    let labels = (0..n).map(|_| rng.random::<f64>() < p).collect();
    (scores, labels)
}

/// `(name, computed, hand value)` for the worked metric examples.
pub fn worked_metric_examples() -> Vec<(&'static str, f64, f64)> {
    use progcast::evaluation::{aupr, auroc, ece, threshold_metrics};
    let mut out = vec![
        ("auroc 3 of 4 pairs", auroc(&[0.9, 0.8, 0.85, 0.7], &[true, true, false, false]).unwrap(), 0.75),
        ("auroc all tied", auroc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), 0.5),
        ("auroc perfect", auroc(&[0.9, 0.8, 0.2], &[true, true, false]).unwrap(), 1.0),
        ("aupr positive last", aupr(&[0.9, 0.8, 0.7, 0.1], &[false, false, false, true]).unwrap(), 0.25),
        ("aupr perfect", aupr(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap(), 1.0),
        ("ece two bins", ece(&[0.15, 0.15, 0.95, 0.95], &[false, true, true, true], 10), 0.2),
        ("ece maximal", ece(&[1.0; 4], &[false; 4], 10), 1.0),
        ("ece calibrated", ece(&[0.5; 4], &[true, false, true, false], 10), 0.0),
    ];
    // Positive class MCI: 2 TP, 1 FN, 3 TN, 1 FP.
    let probs: Array2<f64> = ndarray::array![
        [0.1, 0.8, 0.1],
        [0.2, 0.7, 0.1],
        [0.6, 0.3, 0.1],
        [0.7, 0.2, 0.1],
        [0.5, 0.4, 0.1],
        [0.9, 0.05, 0.05],
        [0.3, 0.6, 0.1],
    ];
    let t = threshold_metrics(probs.view(), &[true, true, true, false, false, false, false], MCI);
    out.push(("sensitivity", t.sensitivity.unwrap(), 2.0 / 3.0));
    out.push(("specificity", t.specificity.unwrap(), 0.75));
    out.push(("balanced accuracy", t.balanced_accuracy.unwrap(), 17.0 / 24.0));
    let all_right: Array2<f64> = ndarray::array![[0.1, 0.8, 0.1], [0.7, 0.2, 0.1]];
    let t = threshold_metrics(all_right.view(), &[true, false], MCI);
    out.push(("balanced accuracy all correct", t.balanced_accuracy.unwrap(), 1.0));
    out
}
