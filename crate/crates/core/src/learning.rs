//! Linear reward learning by minimizing the preference cross-entropy with
//! full-batch Adam.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{double_with_flips, PreferenceDataset};
use crate::error::{PreferenceError, TrainError};
use crate::mdp::{GridMap, LinearReward, State, NUM_FEATURES};
use crate::planner::SuccessorFeatureSet;
use crate::preference::{logistic, soft_value_at, statistic_difference, ModelKind, Values, DEFAULT_TEMPERATURE};

/// Probabilities are clamped below at this value inside the loss.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub softmax_temperature: f64,
    pub seed: u64,
    pub early_stop_best_loss: bool,
}

impl TrainConfig {
    pub fn partial_return() -> Self {
        TrainConfig {
            model: ModelKind::PartialReturn,
            learning_rate: 2.0,
            epochs: 30_000,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            softmax_temperature: DEFAULT_TEMPERATURE,
            seed: 0,
            early_stop_best_loss: false,
        }
    }

    pub fn regret() -> Self {
        TrainConfig {
            model: ModelKind::Regret,
            learning_rate: 0.5,
            epochs: 5_000,
            early_stop_best_loss: true,
            ..TrainConfig::partial_return()
        }
    }

    pub fn for_model(model: ModelKind) -> Self {
        match model {
            ModelKind::PartialReturn => TrainConfig::partial_return(),
            ModelKind::Regret => TrainConfig::regret(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub weights: LinearReward,
    /// Mean cross-entropy of the weights entering each epoch.
    pub loss_curve: Vec<f64>,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub config: TrainConfig,
}

/// Per-sample loss terms `-mu1 ln P(1 > 2) - mu2 ln P(2 > 1)` with
/// `P = logistic(x)`, and `dloss/dx`. Clamped terms contribute no gradient.
pub(crate) fn ce_terms(x: f64, mu: (f64, f64)) -> (f64, f64) {
    let floor = PROB_FLOOR.ln();
    // ln logistic(x) = -ln(1 + e^-x), computed without overflow.
    let log_sigmoid = |z: f64| if z >= 0.0 { -(-z).exp().ln_1p() } else { z - z.exp().ln_1p() };
    let mut loss = 0.0;
    let mut dx = 0.0;
    if mu.0 > 0.0 {
        let lp = log_sigmoid(x);
        if lp > floor {
            loss -= mu.0 * lp;
            dx -= mu.0 * logistic(-x);
        } else {
            loss -= mu.0 * floor;
        }
    }
    if mu.1 > 0.0 {
        let lp = log_sigmoid(-x);
        if lp > floor {
            loss -= mu.1 * lp;
            dx += mu.1 * logistic(x);
        } else {
            loss -= mu.1 * floor;
        }
    }
    (loss, dx)
}

/// Mean cross-entropy over samples with a preference (can't-tell is
/// skipped) at the given scale. Regret uses whichever values are supplied.
pub fn cross_entropy_loss(
    w: &LinearReward,
    d: &PreferenceDataset,
    model: ModelKind,
    scale: f64,
    values: Values<'_>,
) -> Result<f64, PreferenceError> {
    let mut total = 0.0;
    let mut n = 0usize;
    for s in &d.samples {
        let Some(label) = s.label.preference() else { continue };
        let diff = statistic_difference(model, &s.sigma1, &s.sigma2, w, values)?;
        total += ce_terms(scale * diff, label.mu()).0;
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { total / n as f64 })
}

/// A dataset reduced to what the loss needs: feature-sum differences,
/// labels and, for regret, the cells whose values enter the statistic.
#[derive(Clone, Debug)]
pub struct PreparedDataset {
    model: ModelKind,
    rows: Vec<Row>,
    /// Distinct non-terminal cells referenced by regret rows.
    cells: Vec<usize>,
}

#[derive(Clone, Debug)]
struct Row {
    dphi: [f64; NUM_FEATURES],
    mu: (f64, f64),
    // Slots into `cells`; `None` for terminal states (value 0).
    end1: Option<usize>,
    end2: Option<usize>,
    // Distinct starts only; equal starts cancel.
    starts: Option<(Option<usize>, Option<usize>)>,
}

impl PreparedDataset {
    pub fn new(d: &PreferenceDataset, model: ModelKind, sfs: Option<&SuccessorFeatureSet>) -> Result<Self, TrainError> {
        let mut cells = Vec::new();
        let mut slots: HashMap<usize, usize> = HashMap::new();
        let mut slot = |s: &State| -> Option<usize> {
            if s.terminal {
                return None;
            }
            let sfs = sfs.expect("checked before slotting");
            let cell = sfs.cell_index(s);
            Some(*slots.entry(cell).or_insert_with(|| {
                cells.push(cell);
                cells.len() - 1
            }))
        };
        if model == ModelKind::Regret {
            let sfs = sfs.ok_or(TrainError::MissingSuccessorFeatures)?;
            if sfs.is_empty() {
                return Err(PreferenceError::EmptySuccessorFeatures.into());
            }
            if sfs.map_fingerprint() != d.map_fingerprint {
                return Err(PreferenceError::SuccessorFeatureMismatch.into());
            }
        }
        let mut rows = Vec::with_capacity(d.samples.len());
        for s in &d.samples {
            let Some(label) = s.label.preference() else { continue };
            let dphi = s.sigma1.feature_sum() - s.sigma2.feature_sum();
            let mut row = Row { dphi, mu: label.mu(), end1: None, end2: None, starts: None };
            if model == ModelKind::Regret {
                row.end1 = slot(&s.sigma1.end());
                row.end2 = slot(&s.sigma2.end());
                if s.sigma1.start() != s.sigma2.start() {
                    row.starts = Some((slot(&s.sigma1.start()), slot(&s.sigma2.start())));
                }
            }
            rows.push(row);
        }
        Ok(PreparedDataset { model, rows, cells })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Mean loss and its gradient in `w` at unit scale. Regret uses soft
    /// values from `sfs` at temperature `tau`.
    pub fn loss_and_gradient(
        &self,
        w: &LinearReward,
        sfs: Option<&SuccessorFeatureSet>,
        tau: f64,
    ) -> (f64, [f64; NUM_FEATURES]) {
        let soft: Vec<(f64, [f64; NUM_FEATURES])> = match (self.model, sfs) {
            (ModelKind::Regret, Some(sfs)) => self.cells.iter().map(|&c| soft_value_at(sfs, c, w, tau)).collect(),
            _ => Vec::new(),
        };
        let value = |slot: Option<usize>| slot.map_or((0.0, [0.0; NUM_FEATURES]), |i| soft[i]);
        let mut loss = 0.0;
        let mut grad = [0.0; NUM_FEATURES];
        for row in &self.rows {
            let mut dstat = row.dphi;
            let mut diff = w.dot(&row.dphi);
            if self.model == ModelKind::Regret {
                let mut add = |slot: Option<usize>, sign: f64, diff: &mut f64| {
                    let (v, g) = value(slot);
                    *diff += sign * v;
                    for f in 0..NUM_FEATURES {
                        dstat[f] += sign * g[f];
                    }
                };
                let mut ends = 0.0;
                add(row.end1, 1.0, &mut ends);
                add(row.end2, -1.0, &mut ends);
                let mut starts = 0.0;
                if let Some((s1, s2)) = row.starts {
                    add(s1, -1.0, &mut starts);
                    add(s2, 1.0, &mut starts);
                }
                diff += ends + starts;
            }
            let (l, dx) = ce_terms(diff, row.mu);
            loss += l;
            for f in 0..NUM_FEATURES {
                grad[f] += dx * dstat[f];
            }
        }
        let n = self.rows.len().max(1) as f64;
        (loss / n, grad.map(|g| g / n))
    }
}

/// Loss and analytic gradient for a dataset, at unit scale.
pub fn loss_and_gradient(
    w: &LinearReward,
    d: &PreferenceDataset,
    model: ModelKind,
    sfs: Option<&SuccessorFeatureSet>,
    tau: f64,
) -> Result<(f64, [f64; NUM_FEATURES]), TrainError> {
    let prepared = PreparedDataset::new(d, model, sfs)?;
    Ok(prepared.loss_and_gradient(w, sfs, tau))
}

/// Full-batch Adam from zero weights on the flip-doubled dataset.
pub fn train(
    d: &PreferenceDataset,
    cfg: &TrainConfig,
    map: &GridMap,
    sfs: Option<&SuccessorFeatureSet>,
) -> Result<TrainResult, TrainError> {
    if d.map_fingerprint != map.fingerprint() {
        return Err(crate::error::DatasetError::FingerprintMismatch {
            expected: map.fingerprint(),
            found: d.map_fingerprint.clone(),
        }
        .into());
    }
    let doubled = double_with_flips(d);
    let prepared = PreparedDataset::new(&doubled, cfg.model, sfs)?;
    if prepared.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if cfg.model == ModelKind::Regret && cfg.softmax_temperature.is_nan() || cfg.softmax_temperature <= 0.0 {
        return Err(PreferenceError::InvalidTemperature(cfg.softmax_temperature).into());
    }
    let (b1, b2) = cfg.adam_betas;
    let mut w = [0.0; NUM_FEATURES];
    let mut m = [0.0; NUM_FEATURES];
    let mut v = [0.0; NUM_FEATURES];
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut best = (0usize, f64::INFINITY, LinearReward(w));
    for epoch in 0..cfg.epochs {
        let (loss, grad) = prepared.loss_and_gradient(&LinearReward(w), sfs, cfg.softmax_temperature);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::NonFinite { epoch });
        }
        loss_curve.push(loss);
        if loss < best.1 {
            best = (epoch, loss, LinearReward(w));
        }
        let t = (epoch + 1) as i32;
        for f in 0..NUM_FEATURES {
            m[f] = b1 * m[f] + (1.0 - b1) * grad[f];
            v[f] = b2 * v[f] + (1.0 - b2) * grad[f] * grad[f];
            let m_hat = m[f] / (1.0 - b1.powi(t));
            let v_hat = v[f] / (1.0 - b2.powi(t));
            w[f] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
    let weights = if cfg.early_stop_best_loss || cfg.epochs == 0 { best.2 } else { LinearReward(w) };
    Ok(TrainResult { weights, loss_curve, best_epoch: best.0, best_loss: best.1, config: cfg.clone() })
}
