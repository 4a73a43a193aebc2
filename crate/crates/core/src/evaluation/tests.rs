use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::cohort::{filter_cohort, generate_synthetic_cohort, Diagnosis, GeneratorConfig, SubjectHistory};
use crate::features::{fit_imputation_stats, FeatureSchema, Modality, ModalityCase, VisitTable};
use crate::model::{init_params, ClassifierShape, ModelConfig, ModelParams};
use crate::training::predict_histories;

fn spec(start: i32, frequency: Frequency) -> ScenarioSpec {
    ScenarioSpec::new(start, frequency, ModalityCase::complete()).unwrap()
}

#[test]
fn restriction_examples() {
    // Absolute years with the reference visit at year 5.
    assert_eq!(restrict_history(&[2, 4, 5], 5, &spec(0, Frequency::Annual)), vec![5]);
    assert_eq!(restrict_history(&[3, 4, 5], 5, &spec(-2, Frequency::Biennial)), vec![3, 5]);
    assert_eq!(restrict_history(&[4], 5, &spec(-3, Frequency::Annual)), vec![4]);
    assert_eq!(restrict_history(&[2, 3, 4, 5], 5, &spec(-3, Frequency::Annual)), vec![2, 3, 4, 5]);
    assert!(ScenarioSpec::new(-4, Frequency::Annual, ModalityCase::complete()).is_err());
    assert_eq!(ScenarioSpec::standard_rows(&ModalityCase::complete()).len(), 5);
}

struct Fixture {
    subjects: Vec<SubjectHistory>,
    schema: FeatureSchema,
    table: VisitTable,
    model: ModelParams,
}

fn fixture(n: usize, seed: u64) -> Fixture {
    let schema = FeatureSchema::synthetic_default();
    let cfg = GeneratorConfig { n_subjects: n, seed, ..GeneratorConfig::default() };
    let subjects = filter_cohort(generate_synthetic_cohort(&cfg, &schema).unwrap()).subjects;
    let stats = fit_imputation_stats(subjects.iter().flat_map(|s| s.visits.iter()), &schema);
    let table = VisitTable::encode(&subjects, &schema, &stats, &ModalityCase::complete()).unwrap();
    let mcfg = ModelConfig::new(schema.token_width(), 8, 2, 1, ClassifierShape::Hidden(4));
    let mut model = init_params(&mcfg, seed).unwrap();
    model.set_age_scaling(stats.age_mean, stats.age_std);
    Fixture { subjects, schema, table, model }
}

#[test]
fn pseudo_sets_hold_one_entry_per_subject() {
    let f = fixture(120, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for year in 1..=5 {
        let set = build_pseudo_test_set(&f.subjects, Diagnosis::CN, year, &mut rng).unwrap();
        let mut ids: Vec<&str> = set.entries.iter().map(|e| e.subject_id.as_str()).collect();
        let n = ids.len();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), n);
        assert!(n <= f.subjects.len());
        assert!(set.entries.iter().all(|e| e.target_year == e.now_year + year && e.history.contains(&e.now_year)));
    }
    assert!(matches!(
        build_pseudo_test_set(&f.subjects[..0], Diagnosis::MCI, 2, &mut rng),
        Err(crate::Error::EmptyPseudoSet { year: 2, .. })
    ));
}

#[test]
fn ensemble_averages_members() {
    let f = fixture(40, 2);
    let hash = f.schema.hash();
    let requests: Vec<(&str, &[u32], u32, u32)> = f.subjects.iter().map(|s| (s.subject_id.as_str(), &[0u32][..], 0, 2)).collect();
    let single = predict_histories(&f.model, &f.table, &requests).unwrap();
    let same = Ensemble::new(vec![f.model.clone(); 5], hash.clone()).unwrap();
    let p = ensemble_predict(&same, &f.table, &requests).unwrap();
    for (a, b) in p.iter().zip(single.iter()) {
        assert!((a - b).abs() < 1e-15);
    }
    let other = init_params(&f.model.config, 99).unwrap();
    let other_pred = predict_histories(&other, &f.table, &requests).unwrap();
    let pair = Ensemble::new(vec![f.model.clone(), other], hash).unwrap();
    let mean = ensemble_predict(&pair, &f.table, &requests).unwrap();
    for ((m, a), b) in mean.iter().zip(single.iter()).zip(other_pred.iter()) {
        assert!((m - (a + b) / 2.0).abs() < 1e-15);
    }
    for row in mean.rows() {
        assert!((row.sum() - 1.0).abs() < 1e-12);
    }
    let wrong = Ensemble::new(vec![f.model.clone()], "not-the-schema").unwrap();
    assert!(matches!(ensemble_predict(&wrong, &f.table, &requests), Err(crate::Error::SchemaMismatch { .. })));
}

#[test]
fn scenario_evaluation_aggregates_pseudo_sets() {
    let f = fixture(150, 4);
    let ens = Ensemble::new(vec![f.model.clone()], f.schema.hash()).unwrap();
    let s = spec(-2, Frequency::Annual);
    let one = evaluate_scenario(&ens, &f.table, &f.subjects, Diagnosis::CN, 2, &s, 1, 5).unwrap();
    assert!(one.summary.iter().filter(|m| m.n == 1).all(|m| m.stderr == 0.0));
    let many = evaluate_scenario(&ens, &f.table, &f.subjects, Diagnosis::CN, 2, &s, 7, 5).unwrap();
    let auc: Vec<f64> = many.per_set.iter().filter_map(|v| v[Metric::Auroc.index()]).collect();
    let hand = auc.iter().sum::<f64>() / auc.len() as f64;
    assert!((many.summary[Metric::Auroc.index()].mean - hand).abs() < 1e-12);
    for v in many.per_set.iter().flatten().flatten() {
        assert!((0.0..=1.0).contains(v));
    }
}

#[test]
fn all_pairs_evaluation_counts_every_eligible_now() {
    let f = fixture(100, 6);
    let ens = Ensemble::new(vec![f.model.clone()], f.schema.hash()).unwrap();
    let s = spec(-1, Frequency::Annual);
    let set = eligible_instances(&f.subjects, Diagnosis::MCI, 1);
    let (_, n) = evaluate_without_bias_reduction(&ens, &f.table, &f.subjects, Diagnosis::MCI, 1, &s).unwrap();
    assert_eq!(n, set.n_instances());
    assert!(n > set.per_subject.len());
}

#[test]
fn single_eligible_now_makes_every_pseudo_set_identical() {
    let f = fixture(100, 7);
    // Keep only the baseline visit plus visits after the last CN-labelled one,
    // so each subject has exactly one CN reference visit.
    let subjects: Vec<SubjectHistory> = f
        .subjects
        .iter()
        .filter(|s| s.baseline_diagnosis == Diagnosis::CN)
        .map(|s| {
            let visits = s.visits.iter().filter(|v| v.year == 0 || v.diagnosis != Some(Diagnosis::CN)).cloned().collect();
            SubjectHistory::from_visits(s.subject_id.clone(), visits).unwrap()
        })
        .collect();
    let ens = Ensemble::new(vec![f.model.clone()], f.schema.hash()).unwrap();
    let s = spec(0, Frequency::Annual);
    let year = 1;
    let eval = evaluate_scenario(&ens, &f.table, &subjects, Diagnosis::CN, year, &s, 5, 8).unwrap();
    assert!(eval.per_set.windows(2).all(|w| w[0] == w[1]));
    let (all, _) = evaluate_without_bias_reduction(&ens, &f.table, &subjects, Diagnosis::CN, year, &s).unwrap();
    assert_eq!(all, eval.per_set[0]);
}

#[test]
fn complete_case_full_history_is_unrestricted() {
    let f = fixture(60, 9);
    let ens = Ensemble::new(vec![f.model.clone()], f.schema.hash()).unwrap();
    let set = eligible_instances(&f.subjects, Diagnosis::CN, 3);
    let preds = predict_eligible(&ens, &f.table, &set, &spec(-3, Frequency::Annual)).unwrap();
    let requests: Vec<(&str, &[u32], u32, u32)> = set
        .per_subject
        .iter()
        .flatten()
        .map(|i| (i.subject_id.as_str(), i.history.as_slice(), i.now_year, i.target_year))
        .collect();
    let direct = predict_histories(&f.model, &f.table, &requests).unwrap();
    for (k, p) in preds.iter().flatten().enumerate() {
        let p = p.unwrap();
        for c in 0..3 {
            assert_eq!(p[c].to_bits(), direct[[k, c]].to_bits());
        }
    }
    let mri = ModalityCase::new([Modality::MRI]).unwrap();
    let wrong_case = ScenarioSpec::new(0, Frequency::Annual, mri).unwrap();
    assert!(predict_eligible(&ens, &f.table, &set, &wrong_case).is_err());
}
