mod common;

use common::*;
use progcast::cohort::{filter_cohort, Diagnosis, SubjectHistory};
use progcast::evaluation::{build_pseudo_test_set, eligible_instances};
use progcast::training::{compute_sample_weights, expand_dataset, expand_dataset_ablated, SampleGroup, TrajectorySample};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use Diagnosis::*;

#[test]
fn roster_rules_and_idempotence() {
    let roster = filter_roster();
    assert_eq!(roster.len(), 12);
    for (s, rule) in &roster {
        let first = progcast::cohort::ExclusionRule::ORDER.into_iter().find(|r| r.applies(s));
        assert_eq!(first, *rule, "{}", s.subject_id);
    }
    let cohort = filter_cohort(roster.iter().map(|(s, _)| s.clone()).collect());
    let kept: Vec<&str> = cohort.subjects.iter().map(|s| s.subject_id.as_str()).collect();
    assert_eq!(kept, ["R01", "R04", "R09", "R12"]);
    let c = &cohort.exclusions;
    assert_eq!(
        (c.ad_at_baseline, c.cn_to_ad, c.cn_mci_reversion, c.mci_reversion, c.no_follow_up, c.malformed),
        (1, 2, 1, 1, 3, 0)
    );
    let again = filter_cohort(cohort.subjects.clone());
    assert_eq!(again.subjects, cohort.subjects);
    assert_eq!(again.exclusions.total(), 0);
}

#[test]
fn missing_baseline_is_rejected_with_reason() {
    let mut s = subject("X", &[(0, CN), (1, CN)]);
    s.visits.remove(0);
    let cohort = filter_cohort(vec![s]);
    assert!(cohort.subjects.is_empty());
    assert_eq!(cohort.exclusions.malformed, 1);
    assert_eq!(cohort.rejected[0].0, "X");
    assert!(filter_cohort(Vec::new()).subjects.is_empty());
}

#[test]
fn expansion_matches_enumerator_on_random_cohorts() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut total = 0;
    for _ in 0..50 {
        let cohort = filter_cohort(random_toy_cohort(&mut rng, 12));
        let got = sample_keys(&expand_dataset(&cohort.subjects));
        assert_eq!(got, brute_force_expansion(&cohort.subjects, false));
        let ablated = sample_keys(&expand_dataset_ablated(&cohort.subjects));
        assert_eq!(ablated, brute_force_expansion(&cohort.subjects, true));
        total += got.len();
    }
    assert!(total > 500, "toy cohorts too sparse: {total}");
}

#[test]
fn expansion_worked_examples() {
    let s = subject("A", &[(0, CN), (1, CN), (2, CN), (3, CN), (4, CN), (5, CN), (6, CN)]);
    let samples = expand_dataset(&[s]);
    let from_one: Vec<&TrajectorySample> = samples.iter().filter(|x| x.now_year == 1).collect();
    assert_eq!(from_one.len(), 5);
    assert_eq!(from_one[0].history, vec![0, 1]);
    let s = subject("B", &[(0, MCI), (2, AD)]);
    let samples = expand_dataset(&[s]);
    assert!(samples.iter().all(|x| x.now_year == 0));
    // Year 1 has no visit and precedes the conversion, so it carries no label.
    assert_eq!(samples.iter().map(|x| x.target_year).collect::<Vec<_>>(), [2, 3, 4, 5]);
}

fn cell_sums(samples: &[TrajectorySample]) -> std::collections::BTreeMap<(SampleGroup, u32), f64> {
    let mut sums = std::collections::BTreeMap::new();
    for s in samples {
        *sums.entry((s.group, s.delta_t())).or_insert(0.0) += s.weight;
    }
    sums
}

#[test]
fn reweighting_cell_sums_equal_total_over_cells() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..20 {
        let cohort = filter_cohort(random_toy_cohort(&mut rng, 30));
        let mut samples = expand_dataset(&cohort.subjects);
        compute_sample_weights(&mut samples);
        let sums = cell_sums(&samples);
        let t = samples.len() as f64;
        let target = t / sums.len() as f64;
        for v in sums.values() {
            assert!((v - target).abs() < 1e-9);
        }
        let grand: f64 = samples.iter().map(|s| s.weight).sum();
        assert!((grand - t).abs() < 1e-9);
    }
}

#[test]
fn augmentation_rates_match_closed_form() {
    let rates = augmentation_rates(100_000, 33);
    let (altered, retention) = augmentation_closed_form(0.8);
    assert!((altered - 0.8 * 14.0 / 15.0).abs() < 1e-15);
    assert!(z_score(rates.altered, altered, rates.draws) < 3.0, "altered {}", rates.altered);
    for r in rates.retention {
        assert!(z_score(r, retention, rates.draws) < 3.0, "retention {r} vs {retention}");
    }
}

#[test]
fn pseudo_sets_hold_one_entry_per_subject() {
    let subjects = multi_now_cohort();
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for _ in 0..200 {
        let set = build_pseudo_test_set(&subjects, CN, 1, &mut rng).unwrap();
        let mut ids: Vec<&str> = set.entries.iter().map(|e| e.subject_id.as_str()).collect();
        assert!(ids.len() <= subjects.len());
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), set.entries.len());
    }
}

#[test]
fn reference_visit_choice_is_uniform() {
    let set = eligible_instances(&multi_now_cohort(), CN, 1);
    let counts: Vec<usize> = set.per_subject.iter().map(Vec::len).collect();
    // P1: nows 0,1,2; P2: 0,1 (year 2 converted); P3: 2..5 (year 0 has no label at 1); P4: 0.
    assert_eq!(counts, [3, 2, 4, 1]);
    assert!(pseudo_selection_z(&set, 20_000, 35) < 3.0);
}

fn arb_subject() -> impl Strategy<Value = SubjectHistory> {
    (any::<bool>(), prop::collection::vec((any::<bool>(), 0u8..4), 8)).prop_map(|(mci, steps)| {
        let base = if mci { MCI } else { CN };
        let mut stage = base;
        let mut dx = vec![(0, base)];
        for (y, (present, step)) in steps.into_iter().enumerate() {
            if step == 0 {
                stage = stage.next().unwrap_or(stage);
            }
            if present {
                dx.push((y as u32 + 1, stage));
            }
        }
        subject("Q", &dx)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn filter_is_idempotent(subjects in prop::collection::vec(arb_subject(), 0..10)) {
        let subjects: Vec<SubjectHistory> = subjects
            .into_iter()
            .enumerate()
            .map(|(i, mut s)| {
                s.subject_id = format!("Q{i}");
                s
            })
            .collect();
        let once = filter_cohort(subjects);
        let twice = filter_cohort(once.subjects.clone());
        prop_assert_eq!(&twice.subjects, &once.subjects);
        prop_assert_eq!(twice.exclusions.total(), 0);
    }

    #[test]
    fn samples_stay_inside_the_windows(s in arb_subject()) {
        for x in expand_dataset(&filter_cohort(vec![s]).subjects) {
            prop_assert!((1..=5).contains(&x.delta_t()));
            prop_assert!(x.history.iter().all(|&y| y <= x.now_year && x.now_year - y <= 3));
            prop_assert!(x.history.len() <= 4);
            prop_assert!(x.target != AD || x.group.baseline == MCI);
        }
    }
}
