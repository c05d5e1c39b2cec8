//! Learning from random equal-sized partitions of a dataset, repeated over
//! seeds, scored by the normalized return of the learned reward.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::PreferenceDataset;
use crate::error::AnalysisError;
use crate::learning::{train, TrainConfig};
use crate::mdp::{GridMap, LinearReward};
use crate::planner::{ReturnBaseline, SuccessorFeatureSet};

pub const DEFAULT_PARTITION_COUNTS: [usize; 5] = [1, 2, 4, 8, 16];
pub const NEAR_OPTIMAL: f64 = 0.9;
pub const BETTER_THAN_RANDOM: f64 = 0.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub partition_counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
}

impl PartitionConfig {
    /// Partition counts 1..16 in powers of two and seeds 1 through 10.
    pub fn standard(train: TrainConfig) -> Self {
        PartitionConfig { partition_counts: DEFAULT_PARTITION_COUNTS.to_vec(), seeds: (1..=10).collect(), train }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionOutcome {
    pub partition_count: usize,
    pub seed: u64,
    pub partition: usize,
    pub size: usize,
    pub weights: LinearReward,
    pub normalized_return: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub partition_count: usize,
    pub partition_size: usize,
    pub runs: usize,
    pub near_optimal: f64,
    pub better_than_random: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionedExperiment {
    pub summaries: Vec<PartitionSummary>,
    /// Ordered by partition count, seed and partition index.
    pub outcomes: Vec<PartitionOutcome>,
}

/// A uniformly random subset of `n` samples, in shuffled order.
pub fn subsample(d: &PreferenceDataset, n: usize, seed: u64) -> PreferenceDataset {
    let mut samples = d.samples.clone();
    samples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    samples.truncate(n);
    d.with_samples(samples)
}

/// Subsamples every dataset down to the size of the smallest one.
pub fn subsample_to_smallest(datasets: &[PreferenceDataset], seed: u64) -> Vec<PreferenceDataset> {
    let n = datasets.iter().map(PreferenceDataset::len).min().unwrap_or(0);
    datasets.iter().map(|d| subsample(d, n, seed)).collect()
}

/// Trains on every partition of every shuffle and reports, per partition
/// count, the fraction of learned rewards whose normalized return exceeds
/// 0.9 and 0. Remainder samples that do not fill a partition are dropped.
pub fn partitioned_learning_experiment(
    d: &PreferenceDataset,
    cfg: &PartitionConfig,
    map: &GridMap,
    w_gt: &LinearReward,
    sfs: Option<&SuccessorFeatureSet>,
) -> Result<PartitionedExperiment, AnalysisError> {
    for &k in &cfg.partition_counts {
        if k == 0 || d.len() / k == 0 {
            return Err(AnalysisError::EmptyPartition(k));
        }
    }
    let baseline = ReturnBaseline::new(map, w_gt)?;

    let mut jobs = Vec::new();
    for &k in &cfg.partition_counts {
        let size = d.len() / k;
        for &seed in &cfg.seeds {
            let mut samples = d.samples.clone();
            samples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            for p in 0..k {
                jobs.push((k, seed, p, d.with_samples(samples[p * size..(p + 1) * size].to_vec())));
            }
        }
    }

    let outcomes = jobs
        .into_par_iter()
        .map(|(k, seed, p, part)| -> Result<PartitionOutcome, AnalysisError> {
            let result = train(&part, &cfg.train.clone().with_seed(seed), map, sfs)?;
            Ok(PartitionOutcome {
                partition_count: k,
                seed,
                partition: p,
                size: part.len(),
                weights: result.weights,
                normalized_return: baseline.evaluate(map, &result.weights)?,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let summaries = cfg
        .partition_counts
        .iter()
        .map(|&k| {
            let runs: Vec<&PartitionOutcome> = outcomes.iter().filter(|o| o.partition_count == k).collect();
            let frac =
                |t: f64| runs.iter().filter(|o| o.normalized_return > t).count() as f64 / runs.len().max(1) as f64;
            PartitionSummary {
                partition_count: k,
                partition_size: d.len() / k,
                runs: runs.len(),
                near_optimal: frac(NEAR_OPTIMAL),
                better_than_random: frac(BETTER_THAN_RANDOM),
            }
        })
        .collect();
    Ok(PartitionedExperiment { summaries, outcomes })
}

/// Whether the near-optimal fraction never rises by more than one
/// partition's worth as the partition count grows.
pub fn near_optimal_non_increasing(summaries: &[PartitionSummary]) -> bool {
    let mut sorted: Vec<&PartitionSummary> = summaries.iter().collect();
    sorted.sort_by_key(|s| s.partition_count);
    sorted.windows(2).all(|pair| {
        let slack = 1.0 / pair[1].runs.max(1) as f64;
        pair[1].near_optimal <= pair[0].near_optimal + slack + 1e-12
    })
}
