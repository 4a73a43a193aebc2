use std::collections::BTreeMap;

use super::*;
use crate::cohort::{Diagnosis, FeatureValue, SubjectHistory, VisitRecord};
use crate::features::{fit_imputation_stats, FeatureDescriptor, FeatureSchema, Modality, ModalityCase, VisitTable};
use crate::model::{init_params, ClassifierShape, ModelConfig};

fn toy_schema() -> FeatureSchema {
    FeatureSchema::new(vec![FeatureDescriptor::numeric("x", Modality::COGN)]).unwrap()
}

/// Converters carry x = +1 and are MCI at year 1; stable subjects carry x = -1.
fn toy_subjects(n: usize) -> Vec<SubjectHistory> {
    (0..n)
        .map(|i| {
            let id = format!("T{i:03}");
            let converter = i % 2 == 0;
            let x = if converter { 1.0 } else { -1.0 } + 0.1 * (i as f64 / n as f64);
            let visits = (0..2)
                .map(|year| VisitRecord {
                    subject_id: id.clone(),
                    year,
                    diagnosis: Some(if converter && year == 1 { Diagnosis::MCI } else { Diagnosis::CN }),
                    age: Some(70.0 + f64::from(year) + i as f64 * 0.1),
                    features: BTreeMap::from([("x".to_string(), FeatureValue::number(x))]),
                })
                .collect();
            SubjectHistory::from_visits(id, visits).unwrap()
        })
        .collect()
}

struct Toy {
    table: VisitTable,
    train: Vec<TrajectorySample>,
    val: Vec<TrajectorySample>,
    age: (f64, f64),
}

fn toy() -> Toy {
    let schema = toy_schema();
    let subjects = toy_subjects(40);
    let stats = fit_imputation_stats(subjects.iter().flat_map(|s| s.visits.iter()), &schema);
    let table = VisitTable::encode(&subjects, &schema, &stats, &ModalityCase::complete()).unwrap();
    let (a, b) = subjects.split_at(30);
    let mut train = expand_dataset(a);
    let mut val = expand_dataset(b);
    compute_sample_weights(&mut train);
    compute_sample_weights(&mut val);
    Toy { table, train, val, age: (stats.age_mean, stats.age_std) }
}

fn model_cfg(dropout: f64) -> ModelConfig {
    ModelConfig { dropout, ..ModelConfig::new(toy_schema().token_width(), 8, 2, 1, ClassifierShape::Hidden(8)) }
}

fn set<'a>(t: &'a Toy) -> TrainingSet<'a> {
    TrainingSet { table: &t.table, train: &t.train, val: &t.val, age_center: t.age.0, age_scale: t.age.1 }
}

#[test]
fn separable_task_is_learned() {
    let t = toy();
    let cfg = TrainingConfig {
        learning_rate: 1e-2,
        l2: 0.0,
        augment_apply_prob: 0.0,
        max_epochs: 200,
        patience: 200,
        ..TrainingConfig::default()
    };
    let (_, log) = train_model(&set(&t), &model_cfg(0.0), &cfg, 1).unwrap();
    let final_loss = log.records.last().unwrap().train_loss;
    assert!(final_loss < 0.05, "final training loss {final_loss}");
}

#[test]
fn fixed_seed_reproduces_the_log() {
    let t = toy();
    let cfg = TrainingConfig { max_epochs: 4, learning_rate: 5e-3, ..TrainingConfig::default() };
    let (p1, l1) = train_model(&set(&t), &model_cfg(0.5), &cfg, 7).unwrap();
    let (p2, l2) = train_model(&set(&t), &model_cfg(0.5), &cfg, 7).unwrap();
    assert_eq!(l1.to_csv(), l2.to_csv());
    assert_eq!(p1.to_flat(), p2.to_flat());
    assert_eq!(l1.to_csv().lines().next().unwrap().split(',').count(), 2 + 15 + 1);
}

#[test]
fn early_stopping_returns_argmin_snapshot() {
    let t = toy();
    let cfg = TrainingConfig { max_epochs: 30, patience: 0, learning_rate: 5e-2, ..TrainingConfig::default() };
    let (params, log) = train_model(&set(&t), &model_cfg(0.5), &cfg, 3).unwrap();
    let crit: Vec<f64> = log.records.iter().map(|r| r.criterion).collect();
    let argmin = crit.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(log.best, argmin);
    if log.records.len() < 30 {
        // With zero patience the run stops at the first epoch that fails to improve.
        assert_eq!(log.records.len(), log.best + 2);
    }
    let scenarios = enumerate_history_scenarios(4);
    let (again, _) = validation_criterion(&params, &t.table, &t.val, &scenarios).unwrap();
    assert!((again - crit[argmin]).abs() < 1e-12);
}

#[test]
fn uniform_model_scores_log_three() {
    let t = toy();
    let mut params = init_params(&model_cfg(0.0), 0).unwrap();
    for s in params.slices_mut().into_iter().rev().take(2) {
        s.fill(0.0);
    }
    let (criterion, per) = validation_criterion(&params, &t.table, &t.val, &enumerate_history_scenarios(4)).unwrap();
    assert!((criterion - 3f64.ln()).abs() < 1e-12);
    let valid: Vec<f64> = per.iter().copied().filter(|x| !x.is_nan()).collect();
    assert!((criterion - valid.iter().sum::<f64>() / valid.len() as f64).abs() < 1e-12);
    // Two-visit histories: only scenarios touching {0, -1} keep samples.
    assert_eq!(valid.len(), 15 - 3);
}

#[test]
fn reference_only_histories_share_losses() {
    let t = toy();
    let only_now: Vec<TrajectorySample> = t.val.iter().filter(|s| s.now_year == 0).cloned().collect();
    let params = init_params(&model_cfg(0.0), 5).unwrap();
    let scenarios = enumerate_history_scenarios(4);
    let (_, per) = validation_criterion(&params, &t.table, &only_now, &scenarios).unwrap();
    let with_now: Vec<f64> =
        scenarios.iter().zip(&per).filter(|(s, _)| s.offsets.contains(&0)).map(|(_, &l)| l).collect();
    assert_eq!(with_now.len(), 8);
    assert!(with_now.iter().all(|&l| (l - with_now[0]).abs() < 1e-12));
}

#[test]
fn config_validation() {
    assert!(TrainingConfig::default().validate().is_ok());
    assert!(TrainingConfig { learning_rate: 0.0, ..TrainingConfig::default() }.validate().is_err());
    assert!(TrainingConfig { visit_drop_prob: 1.0, ..TrainingConfig::default() }.validate().is_err());
    let parsed: TrainingConfig = toml::from_str("learning_rate = 0.001\npatience = 3").unwrap();
    assert_eq!(parsed.patience, 3);
    assert_eq!(parsed.batch_size, 32);
}
