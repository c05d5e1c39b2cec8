//! Scaled likelihood, noiseless accuracy and the partitioned experiment.

use prefbench_core::analysis::*;
use prefbench_core::dataset::*;
use prefbench_core::learning::TrainConfig;
use prefbench_core::maps;
use prefbench_core::mdp::{GridMap, LinearReward};
use prefbench_core::planner::{value_iteration, ValueTable, DEFAULT_GAMMA, DEFAULT_TOL};
use prefbench_core::preference::{ModelKind, PreferenceModelSpec};
use prefbench_core::AnalysisError;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gt() -> LinearReward {
    LinearReward::GROUND_TRUTH
}

fn gt_table(map: &GridMap) -> ValueTable {
    value_iteration(map, &gt(), DEFAULT_GAMMA, DEFAULT_TOL).unwrap()
}

fn data(map: &GridMap, spec: PreferenceModelSpec, seed: u64) -> PreferenceDataset {
    synth_dataset(map, &gt(), &spec, 172, 28, seed).unwrap()
}

#[test]
fn scale_zero_scores_ln_two() {
    let map = maps::delivery();
    let d = data(&map, PreferenceModelSpec::boltzmann(ModelKind::PartialReturn, 0.05), 1);
    let r = best_scaled_likelihood(&d, ModelKind::PartialReturn, &gt(), None).unwrap();
    let (scale, ce) = *r.per_scale.last().unwrap();
    assert_eq!(scale, 0.0);
    assert!((ce - std::f64::consts::LN_2).abs() < 1e-13);
    assert_eq!(r.per_scale.len(), 25);
    assert_eq!(r.per_sample_ce.len(), d.len());
}

#[test]
fn flipped_labels_pick_the_mirrored_scale() {
    let map = maps::delivery();
    let vt = gt_table(&map);
    for model in [ModelKind::PartialReturn, ModelKind::Regret] {
        let d = data(&map, PreferenceModelSpec::boltzmann(model, 0.05), 2);
        let flipped = d.with_samples(
            d.samples.iter().map(|s| PreferenceSample { label: s.label.flipped(), ..s.clone() }).collect(),
        );
        let a = best_scaled_likelihood(&d, model, &gt(), Some(&vt)).unwrap();
        let b = best_scaled_likelihood(&flipped, model, &gt(), Some(&vt)).unwrap();
        for (s1, c1) in &a.per_scale {
            let mirror = b.per_scale.iter().find(|(s, _)| *s == -s1).unwrap();
            assert!((c1 - mirror.1).abs() < 1e-12, "{model} scale {s1}");
        }
        assert!(a.best_scale > 0.0);
        assert!(b.best_scale <= 0.0, "{model}: anti-correlated labels chose {}", b.best_scale);
        assert_eq!(a.best_scale, -b.best_scale);
    }
}

#[test]
fn likelihood_ignores_order_and_doubling() {
    let map = maps::delivery();
    let vt = gt_table(&map);
    let d = data(&map, PreferenceModelSpec::boltzmann(ModelKind::Regret, 0.03), 3);
    let base = best_scaled_likelihood(&d, ModelKind::Regret, &gt(), Some(&vt)).unwrap();
    let mut shuffled = d.samples.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(4));
    for other in [d.with_samples(shuffled), double_with_flips(&d)] {
        let r = best_scaled_likelihood(&other, ModelKind::Regret, &gt(), Some(&vt)).unwrap();
        assert_eq!(r.best_scale, base.best_scale);
        for (a, b) in base.per_scale.iter().zip(&r.per_scale) {
            assert!((a.1 - b.1).abs() < 1e-12);
        }
    }
}

#[test]
fn likelihood_needs_samples_and_values() {
    let map = maps::delivery();
    let d = data(&map, PreferenceModelSpec::noiseless(ModelKind::PartialReturn), 5);
    assert!(matches!(
        best_scaled_likelihood(&d.with_samples(Vec::new()), ModelKind::PartialReturn, &gt(), None),
        Err(AnalysisError::EmptyDataset)
    ));
    assert!(best_scaled_likelihood(&d, ModelKind::Regret, &gt(), None).is_err());
    let cant_tell =
        d.with_samples(d.samples.iter().map(|s| PreferenceSample { label: Label::CantTell, ..s.clone() }).collect());
    assert!(matches!(
        noiseless_accuracy(&cant_tell, ModelKind::PartialReturn, &gt(), None),
        Err(AnalysisError::EmptyDataset)
    ));
}

#[test]
fn noiseless_labels_are_fully_accurate() {
    let map = maps::delivery();
    let vt = gt_table(&map);
    for model in [ModelKind::PartialReturn, ModelKind::Regret] {
        let d = data(&map, PreferenceModelSpec::noiseless(model), 6);
        assert_eq!(noiseless_accuracy(&d, model, &gt(), Some(&vt)).unwrap(), 1.0);
    }
}

#[test]
fn random_labels_score_about_one_half() {
    let map = maps::delivery();
    let d =
        synth_dataset(&map, &gt(), &PreferenceModelSpec::noiseless(ModelKind::PartialReturn), 1800, 200, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let random = d.with_samples(
        d.samples
            .iter()
            .map(|s| PreferenceSample { label: if rng.random() { Label::First } else { Label::Second }, ..s.clone() })
            .collect(),
    );
    let acc = noiseless_accuracy(&random, ModelKind::PartialReturn, &gt(), None).unwrap();
    // Four binomial standard deviations at n = 2000.
    assert!((acc - 0.5).abs() < 4.0 * (0.25f64 / 2000.0).sqrt(), "{acc}");
}

#[test]
fn contingency_rows_are_correct_and_incorrect() {
    let map = maps::delivery();
    let good = data(&map, PreferenceModelSpec::noiseless(ModelKind::PartialReturn), 9);
    let bad = good.with_samples(
        good.samples.iter().map(|s| PreferenceSample { label: s.label.flipped(), ..s.clone() }).collect(),
    );
    let t = accuracy_contingency(&good, &bad, ModelKind::PartialReturn, &gt(), None).unwrap();
    let strict = good.samples.iter().filter(|s| s.label.is_strict()).count() as u64;
    assert_eq!(t, [[strict, 0], [0, strict]]);
    assert!(fisher_exact(t).unwrap() < 1e-10);
}

#[test]
fn partitioned_experiment_is_reproducible() {
    let map = maps::teach_coins();
    let d = synth_dataset(&map, &gt(), &PreferenceModelSpec::noiseless(ModelKind::PartialReturn), 40, 8, 10).unwrap();
    let cfg = PartitionConfig {
        partition_counts: vec![1, 2, 4],
        seeds: vec![1, 2, 3],
        train: TrainConfig { epochs: 150, ..TrainConfig::partial_return() },
    };
    let a = partitioned_learning_experiment(&d, &cfg, &map, &gt(), None).unwrap();
    let b = partitioned_learning_experiment(&d, &cfg, &map, &gt(), None).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.outcomes.len(), 3 * (1 + 2 + 4));
    for (s, k) in a.summaries.iter().zip([1usize, 2, 4]) {
        assert_eq!(s.partition_count, k);
        assert_eq!(s.partition_size, 48 / k);
        assert_eq!(s.runs, 3 * k);
        assert!(s.near_optimal <= s.better_than_random);
        assert!((0.0..=1.0).contains(&s.near_optimal) && (0.0..=1.0).contains(&s.better_than_random));
    }
    let keys: Vec<_> = a.outcomes.iter().map(|o| (o.partition_count, o.seed, o.partition)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn partitions_smaller_than_one_sample_are_rejected() {
    let map = maps::teach_coins();
    let d = synth_dataset(&map, &gt(), &PreferenceModelSpec::noiseless(ModelKind::PartialReturn), 3, 0, 11).unwrap();
    let cfg = PartitionConfig { partition_counts: vec![4], seeds: vec![1], train: TrainConfig::partial_return() };
    assert!(matches!(
        partitioned_learning_experiment(&d, &cfg, &map, &gt(), None),
        Err(AnalysisError::EmptyPartition(4))
    ));
}

#[test]
fn subsampling_matches_the_smallest_dataset() {
    let map = maps::delivery();
    let a = data(&map, PreferenceModelSpec::noiseless(ModelKind::PartialReturn), 12);
    let b = a.with_samples(a.samples[..77].to_vec());
    let out = subsample_to_smallest(&[a.clone(), b], 3);
    assert!(out.iter().all(|d| d.len() == 77));
    assert_eq!(subsample(&a, 50, 3), subsample(&a, 50, 3));
}
