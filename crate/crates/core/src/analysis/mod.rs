//! Evaluation battery: likelihood under a grid of reward scales, noiseless
//! accuracy, nonparametric tests and partitioned learning experiments.

pub mod partition;
pub mod report;
pub mod stats;

use serde::{Deserialize, Serialize};

use crate::dataset::PreferenceDataset;
use crate::error::AnalysisError;
use crate::learning::ce_terms;
use crate::mdp::LinearReward;
use crate::planner::ValueTable;
use crate::preference::{statistic_difference, ModelKind, PreferenceLabel, Values, TIE_EPSILON};

pub use partition::{
    near_optimal_non_increasing, partitioned_learning_experiment, subsample, subsample_to_smallest, PartitionConfig,
    PartitionOutcome, PartitionSummary, PartitionedExperiment,
};
pub use report::{AccuracyEntry, ExperimentReport, LikelihoodEntry, PartitionEntry, ReportFormat, TestEntry};
pub use stats::{fisher_exact, mann_whitney_u, spearman, spearman_exact, wilcoxon_signed_rank, TestResult};

pub const GRID_FIRST: f64 = 0.01;
pub const GRID_RATIO: f64 = 1.236;
/// Positive scales in the grid; the same number of negatives follow, then 0.
pub const GRID_STEPS: usize = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingGrid {
    pub params: Vec<f64>,
}

/// The 25 reward scales: 12 geometric positives, their negatives, then 0.
pub fn scaling_grid() -> ScalingGrid {
    let positives: Vec<f64> = (0..GRID_STEPS).map(|k| GRID_FIRST * GRID_RATIO.powi(k as i32)).collect();
    let mut params = positives.clone();
    params.extend(positives.iter().map(|p| -p));
    params.push(0.0);
    ScalingGrid { params }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledLikelihood {
    pub best_scale: f64,
    pub mean_ce: f64,
    /// `(scale, mean cross-entropy)` in grid order.
    pub per_scale: Vec<(f64, f64)>,
    /// Cross-entropy of each scored sample at the best scale.
    pub per_sample_ce: Vec<f64>,
}

/// Statistic differences and label weights of every sample that carries a
/// preference. Can't-tell responses are skipped.
fn scored_samples(
    d: &PreferenceDataset,
    model: ModelKind,
    w: &LinearReward,
    vt: Option<&ValueTable>,
) -> Result<Vec<(f64, PreferenceLabel)>, AnalysisError> {
    let values = vt.map_or(Values::None, Values::Exact);
    let mut out = Vec::with_capacity(d.len());
    for s in &d.samples {
        let Some(label) = s.label.preference() else { continue };
        out.push((statistic_difference(model, &s.sigma1, &s.sigma2, w, values)?, label));
    }
    Ok(out)
}

/// Cross-entropy of the dataset at every grid scale, using exact segment
/// statistics under `w`. For regret the scale multiplies negated regret.
/// The first grid scale attaining the minimum wins.
pub fn best_scaled_likelihood(
    d: &PreferenceDataset,
    model: ModelKind,
    w: &LinearReward,
    vt: Option<&ValueTable>,
) -> Result<ScaledLikelihood, AnalysisError> {
    let scored = scored_samples(d, model, w, vt)?;
    if scored.is_empty() {
        return Err(AnalysisError::EmptyDataset);
    }
    let n = scored.len() as f64;
    let per_scale: Vec<(f64, f64)> = scaling_grid()
        .params
        .into_iter()
        .map(|scale| {
            let total: f64 = scored.iter().map(|(diff, label)| ce_terms(scale * diff, label.mu()).0).sum();
            (scale, total / n)
        })
        .collect();
    let mut best = per_scale[0];
    for &entry in &per_scale[1..] {
        if entry.1 < best.1 {
            best = entry;
        }
    }
    let per_sample_ce = scored.iter().map(|(diff, label)| ce_terms(best.0 * diff, label.mu()).0).collect();
    Ok(ScaledLikelihood { best_scale: best.0, mean_ce: best.1, per_scale, per_sample_ce })
}

/// Outcome of scoring one strict label against the noiseless model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Agreement {
    Correct,
    Incorrect,
    /// The model's statistic ties, so it makes no prediction.
    ModelTie,
}

/// Per-sample agreement of strict labels with the noiseless model.
pub fn noiseless_agreement(
    d: &PreferenceDataset,
    model: ModelKind,
    w: &LinearReward,
    vt: Option<&ValueTable>,
) -> Result<Vec<Agreement>, AnalysisError> {
    Ok(scored_samples(d, model, w, vt)?
        .into_iter()
        .filter(|(_, label)| *label != PreferenceLabel::Tie)
        .map(|(diff, label)| {
            if diff.abs() <= TIE_EPSILON {
                Agreement::ModelTie
            } else if (diff > 0.0) == (label == PreferenceLabel::First) {
                Agreement::Correct
            } else {
                Agreement::Incorrect
            }
        })
        .collect())
}

/// Fraction of strict labels the noiseless model reproduces. Pairs on
/// which the model's statistic ties count as half correct.
pub fn noiseless_accuracy(
    d: &PreferenceDataset,
    model: ModelKind,
    w: &LinearReward,
    vt: Option<&ValueTable>,
) -> Result<f64, AnalysisError> {
    let agreement = noiseless_agreement(d, model, w, vt)?;
    if agreement.is_empty() {
        return Err(AnalysisError::EmptyDataset);
    }
    let score: f64 = agreement
        .iter()
        .map(|a| match a {
            Agreement::Correct => 1.0,
            Agreement::Incorrect => 0.0,
            Agreement::ModelTie => 0.5,
        })
        .sum();
    Ok(score / agreement.len() as f64)
}

/// 2x2 table for comparing noiseless accuracy across two datasets: rows are
/// correct/incorrect, columns are intervention/control. Model ties are left
/// out because they are neither.
pub fn accuracy_contingency(
    intervention: &PreferenceDataset,
    control: &PreferenceDataset,
    model: ModelKind,
    w: &LinearReward,
    vt: Option<&ValueTable>,
) -> Result<[[u64; 2]; 2], AnalysisError> {
    let mut table = [[0u64; 2]; 2];
    for (col, d) in [intervention, control].into_iter().enumerate() {
        for a in noiseless_agreement(d, model, w, vt)? {
            match a {
                Agreement::Correct => table[0][col] += 1,
                Agreement::Incorrect => table[1][col] += 1,
                Agreement::ModelTie => {}
            }
        }
    }
    Ok(table)
}
