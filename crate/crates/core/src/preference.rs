//! Segments, segment statistics and the two logistic preference models.
//!
//! Both models compare a scalar statistic of each segment: the undiscounted
//! partial return, or the negated regret. Regret is computed either exactly
//! from a [`ValueTable`] or softly from a [`SuccessorFeatureSet`], the latter
//! being differentiable in the reward weights.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::PreferenceError;
use crate::mdp::{Action, FeatureVector, GridMap, LinearReward, State, NUM_FEATURES};
use crate::planner::{SuccessorFeatureSet, ValueTable};

/// Softmax temperature for successor-feature value estimates.
pub const DEFAULT_TEMPERATURE: f64 = 0.001;

/// Statistic differences at or below this magnitude count as ties for the
/// noiseless models. Absorbs value-iteration round-off.
pub const TIE_EPSILON: f64 = 1e-6;

/// A trajectory fragment: `states.len() == actions.len() + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Segment {
    states: Vec<State>,
    actions: Vec<Action>,
    phis: Vec<FeatureVector>,
}

impl Segment {
    /// Rolls `actions` out from `start`. Every action must be taken from a
    /// non-terminal state.
    pub fn from_actions(map: &GridMap, start: State, actions: &[Action]) -> Result<Segment, PreferenceError> {
        if !map.is_valid_state(&start) {
            return Err(PreferenceError::InvalidSegment(format!("start ({}, {}) is not a state", start.x, start.y)));
        }
        let mut states = Vec::with_capacity(actions.len() + 1);
        let mut phis = Vec::with_capacity(actions.len());
        states.push(start);
        let mut s = start;
        for (t, &a) in actions.iter().enumerate() {
            if s.terminal {
                return Err(PreferenceError::InvalidSegment(format!("action {t} follows a terminal state")));
            }
            let tr = map.step(&s, a)?;
            phis.push(tr.phi);
            states.push(tr.next);
            s = tr.next;
        }
        Ok(Segment { states, actions: actions.to_vec(), phis })
    }

    /// Checks that every transition agrees with the map's dynamics.
    pub fn validate(&self, map: &GridMap) -> Result<(), PreferenceError> {
        let rebuilt = Segment::from_actions(map, self.start(), &self.actions)?;
        if rebuilt != *self {
            return Err(PreferenceError::InvalidSegment("transitions disagree with the map".into()));
        }
        Ok(())
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn phis(&self) -> &[FeatureVector] {
        &self.phis
    }

    pub fn start(&self) -> State {
        self.states[0]
    }

    pub fn end(&self) -> State {
        *self.states.last().expect("segment has a start state")
    }

    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn terminated(&self) -> bool {
        self.end().terminal
    }

    pub fn feature_sum(&self) -> FeatureVector {
        self.phis.iter().copied().sum()
    }
}

/// A strict or indifferent preference between two segments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreferenceLabel {
    First,
    Second,
    Tie,
}

impl PreferenceLabel {
    /// The label as a distribution `(mu1, mu2)`.
    pub fn mu(self) -> (f64, f64) {
        match self {
            PreferenceLabel::First => (1.0, 0.0),
            PreferenceLabel::Second => (0.0, 1.0),
            PreferenceLabel::Tie => (0.5, 0.5),
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            PreferenceLabel::First => PreferenceLabel::Second,
            PreferenceLabel::Second => PreferenceLabel::First,
            PreferenceLabel::Tie => PreferenceLabel::Tie,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    PartialReturn,
    Regret,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::PartialReturn => "partial_return",
            ModelKind::Regret => "regret",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "partial_return" | "pr" => Ok(ModelKind::PartialReturn),
            "regret" => Ok(ModelKind::Regret),
            _ => Err(format!("unknown preference model {s:?} (expected partial_return or regret)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Noise {
    Boltzmann,
    Noiseless,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceModelSpec {
    pub kind: ModelKind,
    pub noise: Noise,
    /// Multiplies the statistic difference. Ignored when noiseless.
    pub scale: f64,
}

impl PreferenceModelSpec {
    pub fn boltzmann(kind: ModelKind, scale: f64) -> Self {
        PreferenceModelSpec { kind, noise: Noise::Boltzmann, scale }
    }

    pub fn noiseless(kind: ModelKind) -> Self {
        PreferenceModelSpec { kind, noise: Noise::Noiseless, scale: 1.0 }
    }
}

/// Where regret gets its state values from.
#[derive(Clone, Copy, Debug)]
pub enum Values<'a> {
    /// Partial return only; regret is unavailable.
    None,
    Exact(&'a ValueTable),
    Soft {
        sfs: &'a SuccessorFeatureSet,
        tau: f64,
    },
}

/// Undiscounted sum of rewards over the segment.
pub fn partial_return(sigma: &Segment, w: &LinearReward) -> f64 {
    w.reward(&sigma.feature_sum())
}

fn check_table(vt: &ValueTable, w: &LinearReward) -> Result<(), PreferenceError> {
    if vt.weights() != w {
        return Err(PreferenceError::ValueTableMismatch);
    }
    Ok(())
}

/// `V*(s_0) - (partial return + V*(s_end))` with exact optimal values.
pub fn regret_d(sigma: &Segment, w: &LinearReward, vt: &ValueTable) -> Result<f64, PreferenceError> {
    check_table(vt, w)?;
    Ok(vt.value(&sigma.start()) - (partial_return(sigma, w) + vt.value(&sigma.end())))
}

/// Soft maximum over candidate values at one state, with its gradient in `w`.
///
/// `softV = sum_i p_i v_i` where `v_i = w . psi_i(s)` and `p = softmax(v / tau)`.
pub fn soft_value_and_grad(
    sfs: &SuccessorFeatureSet,
    s: &State,
    w: &LinearReward,
    tau: f64,
) -> Result<(f64, [f64; NUM_FEATURES]), PreferenceError> {
    if sfs.is_empty() {
        return Err(PreferenceError::EmptySuccessorFeatures);
    }
    if tau.is_nan() || tau <= 0.0 {
        return Err(PreferenceError::InvalidTemperature(tau));
    }
    if s.terminal {
        return Ok((0.0, [0.0; NUM_FEATURES]));
    }
    let cell = sfs.cell_index(s);
    Ok(soft_value_at(sfs, cell, w, tau))
}

pub(crate) fn soft_value_at(
    sfs: &SuccessorFeatureSet,
    cell: usize,
    w: &LinearReward,
    tau: f64,
) -> (f64, [f64; NUM_FEATURES]) {
    let values = sfs.candidate_values(cell, w);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = values.iter().map(|v| ((v - max) / tau).exp()).collect();
    let total: f64 = weights.iter().sum();
    let soft: f64 = weights.iter().zip(&values).map(|(p, v)| p / total * v).sum();
    let mut grad = [0.0; NUM_FEATURES];
    for ((p, v), entry) in weights.iter().zip(&values).zip(&sfs.entries) {
        let coef = p / total * (1.0 + (v - soft) / tau);
        let psi = &entry.psi[cell];
        for f in 0..NUM_FEATURES {
            grad[f] += coef * psi[f];
        }
    }
    (soft, grad)
}

/// Regret with optimal values replaced by successor-feature soft maxima.
pub fn soft_regret(
    sigma: &Segment,
    w: &LinearReward,
    sfs: &SuccessorFeatureSet,
    tau: f64,
) -> Result<f64, PreferenceError> {
    let (v0, _) = soft_value_and_grad(sfs, &sigma.start(), w, tau)?;
    let (v1, _) = soft_value_and_grad(sfs, &sigma.end(), w, tau)?;
    Ok(v0 - (partial_return(sigma, w) + v1))
}

fn state_value(s: &State, w: &LinearReward, values: Values<'_>) -> Result<f64, PreferenceError> {
    match values {
        Values::None => Err(PreferenceError::MissingValues),
        Values::Exact(vt) => {
            check_table(vt, w)?;
            Ok(vt.value(s))
        }
        Values::Soft { sfs, tau } => Ok(soft_value_and_grad(sfs, s, w, tau)?.0),
    }
}

/// `stat(sigma1) - stat(sigma2)`, where the statistic is partial return or
/// negated regret. Start values are differenced before being combined, so
/// equal starts cancel exactly.
pub fn statistic_difference(
    kind: ModelKind,
    sigma1: &Segment,
    sigma2: &Segment,
    w: &LinearReward,
    values: Values<'_>,
) -> Result<f64, PreferenceError> {
    let returns = partial_return(sigma1, w) - partial_return(sigma2, w);
    match kind {
        ModelKind::PartialReturn => Ok(returns),
        ModelKind::Regret => {
            let ends = state_value(&sigma1.end(), w, values)? - state_value(&sigma2.end(), w, values)?;
            let starts = if sigma1.start() == sigma2.start() {
                0.0
            } else {
                state_value(&sigma1.start(), w, values)? - state_value(&sigma2.start(), w, values)?
            };
            Ok(returns + ends - starts)
        }
    }
}

/// Numerically stable logistic function.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn noiseless_from_diff(diff: f64) -> PreferenceLabel {
    if diff > TIE_EPSILON {
        PreferenceLabel::First
    } else if diff < -TIE_EPSILON {
        PreferenceLabel::Second
    } else {
        PreferenceLabel::Tie
    }
}

/// Probability that `sigma1` is preferred to `sigma2`.
pub fn pref_prob(
    spec: &PreferenceModelSpec,
    sigma1: &Segment,
    sigma2: &Segment,
    w: &LinearReward,
    values: Values<'_>,
) -> Result<f64, PreferenceError> {
    let diff = statistic_difference(spec.kind, sigma1, sigma2, w, values)?;
    Ok(match spec.noise {
        Noise::Boltzmann => {
            if spec.scale.is_nan() || spec.scale <= 0.0 {
                return Err(PreferenceError::InvalidScale(spec.scale));
            }
            logistic(spec.scale * diff)
        }
        Noise::Noiseless => noiseless_from_diff(diff).mu().0,
    })
}

/// Deterministic label from the strictly better statistic; ties give `Tie`.
pub fn noiseless_label(
    spec: &PreferenceModelSpec,
    sigma1: &Segment,
    sigma2: &Segment,
    w: &LinearReward,
    values: Values<'_>,
) -> Result<PreferenceLabel, PreferenceError> {
    if spec.noise != Noise::Noiseless {
        return Err(PreferenceError::WrongNoise);
    }
    Ok(noiseless_from_diff(statistic_difference(spec.kind, sigma1, sigma2, w, values)?))
}

/// A Bernoulli draw with the model's preference probability.
pub fn boltzmann_label<R: Rng + ?Sized>(
    spec: &PreferenceModelSpec,
    sigma1: &Segment,
    sigma2: &Segment,
    w: &LinearReward,
    values: Values<'_>,
    rng: &mut R,
) -> Result<PreferenceLabel, PreferenceError> {
    if spec.noise != Noise::Boltzmann {
        return Err(PreferenceError::WrongNoise);
    }
    let p = pref_prob(spec, sigma1, sigma2, w, values)?;
    let u: f64 = rng.random();
    Ok(if u < p { PreferenceLabel::First } else { PreferenceLabel::Second })
}

/// Labels a pair with whichever annotator `spec` describes.
pub fn label_pair<R: Rng + ?Sized>(
    spec: &PreferenceModelSpec,
    sigma1: &Segment,
    sigma2: &Segment,
    w: &LinearReward,
    values: Values<'_>,
    rng: &mut R,
) -> Result<PreferenceLabel, PreferenceError> {
    match spec.noise {
        Noise::Noiseless => noiseless_label(spec, sigma1, sigma2, w, values),
        Noise::Boltzmann => boltzmann_label(spec, sigma1, sigma2, w, values, rng),
    }
}
