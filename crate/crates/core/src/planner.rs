//! Tabular planning on a [`GridMap`]: value iteration, maximum-entropy
//! optimal policies, policy evaluation, normalized return and successor
//! features.
//!
//! Value arrays are indexed by cell (`y * width + x`). Entries for houses and
//! terminals are zero.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::PlanError;
use crate::mdp::{Dynamics, GridMap, LinearReward, State, NUM_FEATURES};

/// Discount used for every planning and evaluation step.
pub const DEFAULT_GAMMA: f64 = 0.999;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 1_000_000;
/// Ties are resolved relative to the largest |Q| at a state.
pub const DEFAULT_TIE_TOL: f64 = 1e-6;
pub const DEFAULT_CANDIDATES: usize = 50;

fn check_params(gamma: f64, tol: f64) -> Result<(), PlanError> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(PlanError::InvalidGamma(gamma));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(PlanError::InvalidTolerance(tol));
    }
    Ok(())
}

/// Optimal state and action values for one reward on one map.
#[derive(Clone, Debug)]
pub struct ValueTable {
    values: Vec<f64>,
    q: Vec<[f64; 4]>,
    pub gamma: f64,
    pub converged_delta: f64,
    pub iterations: usize,
    weights: LinearReward,
    map_fingerprint: String,
    width: usize,
    active: Vec<bool>,
}

impl ValueTable {
    pub fn value(&self, s: &State) -> f64 {
        self.values[s.y * self.width + s.x]
    }

    pub fn q(&self, s: &State) -> [f64; 4] {
        self.q[s.y * self.width + s.x]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn q_values(&self) -> &[[f64; 4]] {
        &self.q
    }

    pub fn weights(&self) -> &LinearReward {
        &self.weights
    }

    pub fn map_fingerprint(&self) -> &str {
        &self.map_fingerprint
    }

    /// True if this table was computed for `map` under `w`.
    pub fn matches(&self, map: &GridMap, w: &LinearReward) -> bool {
        self.weights == *w && self.width == map.width() && self.map_fingerprint == map.fingerprint()
    }

    pub fn matches_fingerprint(&self, fingerprint: &str, w: &LinearReward) -> bool {
        self.weights == *w && self.map_fingerprint == fingerprint
    }

    /// Adds `delta` to the value of one state. Only useful for checking
    /// properties that must not depend on particular state values.
    pub fn with_value_offset(mut self, s: &State, delta: f64) -> Self {
        self.values[s.y * self.width + s.x] += delta;
        self
    }
}

fn backup(dynamics: &Dynamics, w: &LinearReward, gamma: f64, values: &[f64], i: usize) -> Option<[f64; 4]> {
    dynamics.edges[i].as_ref().map(|row| row.map(|e| w.reward(&e.phi) + gamma * values[e.next]))
}

fn max4(q: &[f64; 4]) -> f64 {
    q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn value_iteration(map: &GridMap, w: &LinearReward, gamma: f64, tol: f64) -> Result<ValueTable, PlanError> {
    check_params(gamma, tol)?;
    let dynamics = map.dynamics();
    let n = dynamics.num_cells();
    let mut values = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        residual = 0.0;
        for i in 0..n {
            next[i] = match backup(&dynamics, w, gamma, &values, i) {
                Some(q) => max4(&q),
                None => 0.0,
            };
            residual = f64::max(residual, (next[i] - values[i]).abs());
        }
        std::mem::swap(&mut values, &mut next);
        if residual <= tol {
            break;
        }
    }
    if residual > tol {
        return Err(PlanError::NotConverged { iterations, residual });
    }
    let q = (0..n).map(|i| backup(&dynamics, w, gamma, &values, i).unwrap_or([0.0; 4])).collect();
    Ok(ValueTable {
        values,
        q,
        gamma,
        converged_delta: residual,
        iterations,
        weights: *w,
        map_fingerprint: map.fingerprint(),
        width: map.width(),
        active: dynamics.edges.iter().map(Option::is_some).collect(),
    })
}

/// Action probabilities per cell. Rows for houses and terminals are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub probs: Vec<[f64; 4]>,
    width: usize,
}

impl Policy {
    pub fn uniform(map: &GridMap) -> Policy {
        let dynamics = map.dynamics();
        let probs = dynamics.edges.iter().map(|e| if e.is_some() { [0.25; 4] } else { [0.0; 4] }).collect();
        Policy { probs, width: map.width() }
    }

    pub fn from_probs(map: &GridMap, probs: Vec<[f64; 4]>) -> Result<Policy, PlanError> {
        if probs.len() != map.num_cells() {
            return Err(PlanError::PolicyShape);
        }
        Ok(Policy { probs, width: map.width() })
    }

    pub fn probs_at(&self, s: &State) -> [f64; 4] {
        self.probs[s.y * self.width + s.x]
    }

    fn check(&self, dynamics: &Dynamics) -> Result<(), PlanError> {
        if self.probs.len() != dynamics.num_cells() {
            return Err(PlanError::PolicyShape);
        }
        Ok(())
    }
}

/// Uniform distribution over every action within `tie_tol * max|Q(s, .)|`
/// of the best action at each non-terminal state.
pub fn maxent_optimal_policy(vt: &ValueTable, tie_tol: f64) -> Policy {
    let probs =
        vt.q.iter()
            .zip(&vt.active)
            .map(|(q, &active)| {
                if !active {
                    return [0.0; 4];
                }
                let best = max4(q);
                let scale = q.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                let threshold = best - tie_tol * scale;
                let count = q.iter().filter(|&&v| v >= threshold).count() as f64;
                q.map(|v| if v >= threshold { 1.0 / count } else { 0.0 })
            })
            .collect();
    Policy { probs, width: vt.width }
}

/// Value of a fixed policy, by iterative sweeps.
pub fn policy_evaluation(
    map: &GridMap,
    pi: &Policy,
    w: &LinearReward,
    gamma: f64,
    tol: f64,
) -> Result<Vec<f64>, PlanError> {
    check_params(gamma, tol)?;
    let dynamics = map.dynamics();
    pi.check(&dynamics)?;
    let n = dynamics.num_cells();
    let rewards: Vec<Option<[f64; 4]>> =
        dynamics.edges.iter().map(|row| row.as_ref().map(|r| r.map(|e| w.reward(&e.phi)))).collect();
    let mut values = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        residual = 0.0;
        for i in 0..n {
            next[i] = match (&dynamics.edges[i], &rewards[i]) {
                (Some(row), Some(r)) => (0..4).map(|a| pi.probs[i][a] * (r[a] + gamma * values[row[a].next])).sum(),
                _ => 0.0,
            };
            residual = f64::max(residual, (next[i] - values[i]).abs());
        }
        std::mem::swap(&mut values, &mut next);
        if residual <= tol {
            return Ok(values);
        }
    }
    Err(PlanError::NotConverged { iterations, residual })
}

/// Mean of per-cell values over the uniform start distribution.
pub fn mean_over_starts(map: &GridMap, values: &[f64]) -> f64 {
    let starts = map.start_distribution();
    starts.iter().map(|(s, p)| p * values[map.index(s)]).sum()
}

/// `(V_pi - V_uniform) / (V_star - V_uniform)`: 1 for optimal, 0 for uniform.
pub fn normalized_return(v_pi: f64, v_star: f64, v_uniform: f64) -> Result<f64, PlanError> {
    let denom = v_star - v_uniform;
    if denom.is_nan() || denom <= 0.0 {
        return Err(PlanError::DegenerateNormalization(denom));
    }
    Ok((v_pi - v_uniform) / denom)
}

/// Ground-truth reference values used to normalize policy performance.
#[derive(Clone, Debug)]
pub struct ReturnBaseline {
    pub gamma: f64,
    pub v_star: f64,
    pub v_uniform: f64,
    weights: LinearReward,
}

impl ReturnBaseline {
    pub fn new(map: &GridMap, w: &LinearReward) -> Result<Self, PlanError> {
        let vt = value_iteration(map, w, DEFAULT_GAMMA, DEFAULT_TOL)?;
        let uniform = policy_evaluation(map, &Policy::uniform(map), w, DEFAULT_GAMMA, DEFAULT_TOL)?;
        Ok(ReturnBaseline {
            gamma: DEFAULT_GAMMA,
            v_star: mean_over_starts(map, vt.values()),
            v_uniform: mean_over_starts(map, &uniform),
            weights: *w,
        })
    }

    /// Plans under `learned`, then scores the resulting maximum-entropy
    /// policy under the baseline's reward.
    pub fn evaluate(&self, map: &GridMap, learned: &LinearReward) -> Result<f64, PlanError> {
        let vt = value_iteration(map, learned, self.gamma, DEFAULT_TOL)?;
        let policy = maxent_optimal_policy(&vt, DEFAULT_TIE_TOL);
        let v = policy_evaluation(map, &policy, &self.weights, self.gamma, DEFAULT_TOL)?;
        normalized_return(mean_over_starts(map, &v), self.v_star, self.v_uniform)
    }
}

/// Expected discounted feature sums under `pi`, one 6-vector per cell.
///
/// Solved directly as `(I - gamma P) psi = phi_pi`, then checked against the
/// fixed point; fixed-point sweeps polish the solution if needed.
pub fn successor_features(
    map: &GridMap,
    pi: &Policy,
    gamma: f64,
    tol: f64,
) -> Result<Vec<[f64; NUM_FEATURES]>, PlanError> {
    check_params(gamma, tol)?;
    let dynamics = map.dynamics();
    pi.check(&dynamics)?;
    let n = dynamics.num_cells();
    let active: Vec<usize> = (0..n).filter(|&i| dynamics.edges[i].is_some()).collect();
    let mut slot = vec![usize::MAX; n];
    for (k, &i) in active.iter().enumerate() {
        slot[i] = k;
    }
    let m = active.len();
    let mut a = DMatrix::<f64>::identity(m, m);
    let mut b = DMatrix::<f64>::zeros(m, NUM_FEATURES);
    for (k, &i) in active.iter().enumerate() {
        let row = dynamics.edges[i].as_ref().expect("active cell");
        for (act, e) in row.iter().enumerate() {
            let p = pi.probs[i][act];
            if p == 0.0 {
                continue;
            }
            let phi = e.phi.as_f64();
            for f in 0..NUM_FEATURES {
                b[(k, f)] += p * phi[f];
            }
            if slot[e.next] != usize::MAX {
                a[(k, slot[e.next])] -= gamma * p;
            }
        }
    }
    let lu = a.lu();
    let mut psi = vec![[0.0; NUM_FEATURES]; n];
    for f in 0..NUM_FEATURES {
        let rhs: DVector<f64> = b.column(f).into_owned();
        let sol = lu.solve(&rhs).ok_or(PlanError::Singular)?;
        for (k, &i) in active.iter().enumerate() {
            psi[i][f] = sol[k];
        }
    }

    let sweep = |psi: &Vec<[f64; NUM_FEATURES]>| -> (Vec<[f64; NUM_FEATURES]>, f64) {
        let mut out = vec![[0.0; NUM_FEATURES]; n];
        let mut residual = 0.0_f64;
        for &i in &active {
            let row = dynamics.edges[i].as_ref().expect("active cell");
            let mut acc = [0.0; NUM_FEATURES];
            for (act, e) in row.iter().enumerate() {
                let p = pi.probs[i][act];
                let phi = e.phi.as_f64();
                for f in 0..NUM_FEATURES {
                    acc[f] += p * (phi[f] + gamma * psi[e.next][f]);
                }
            }
            for f in 0..NUM_FEATURES {
                residual = residual.max((acc[f] - psi[i][f]).abs());
            }
            out[i] = acc;
        }
        (out, residual)
    };

    let mut iterations = 0;
    loop {
        let (next, residual) = sweep(&psi);
        if residual <= tol {
            return Ok(psi);
        }
        iterations += 1;
        if iterations >= MAX_ITERATIONS {
            return Err(PlanError::NotConverged { iterations, residual });
        }
        psi = next;
    }
}

/// One candidate policy's successor features.
#[derive(Clone, Debug, PartialEq)]
pub struct SuccessorFeatures {
    pub policy_id: String,
    pub psi: Vec<[f64; NUM_FEATURES]>,
}

/// Successor features of a fixed set of candidate policies, used to form a
/// differentiable estimate of optimal values under any linear reward.
#[derive(Clone, Debug, PartialEq)]
pub struct SuccessorFeatureSet {
    pub entries: Vec<SuccessorFeatures>,
    pub gamma: f64,
    map_fingerprint: String,
    width: usize,
}

pub const SF_DOCUMENT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SfDocument {
    version: u32,
    gamma: f64,
    map_fingerprint: String,
    width: usize,
    height: usize,
    states: Vec<[usize; 2]>,
    entries: Vec<SfDocumentEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SfDocumentEntry {
    policy_id: String,
    psi: Vec<[f64; NUM_FEATURES]>,
}

impl SuccessorFeatureSet {
    pub fn new(map: &GridMap, gamma: f64, entries: Vec<SuccessorFeatures>) -> Self {
        SuccessorFeatureSet { entries, gamma, map_fingerprint: map.fingerprint(), width: map.width() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn map_fingerprint(&self) -> &str {
        &self.map_fingerprint
    }

    pub fn psi(&self, entry: usize, s: &State) -> &[f64; NUM_FEATURES] {
        &self.entries[entry].psi[s.y * self.width + s.x]
    }

    pub fn cell_index(&self, s: &State) -> usize {
        s.y * self.width + s.x
    }

    /// Candidate values `w . psi_i(s)` at one cell.
    pub fn candidate_values(&self, cell: usize, w: &LinearReward) -> Vec<f64> {
        self.entries.iter().map(|e| w.dot(&e.psi[cell])).collect()
    }

    /// Versioned JSON document keyed by the map's non-house states.
    pub fn to_json(&self, map: &GridMap) -> String {
        let states: Vec<State> = map.states().collect();
        let doc = SfDocument {
            version: SF_DOCUMENT_VERSION,
            gamma: self.gamma,
            map_fingerprint: self.map_fingerprint.clone(),
            width: map.width(),
            height: map.height(),
            states: states.iter().map(|s| [s.x, s.y]).collect(),
            entries: self
                .entries
                .iter()
                .map(|e| SfDocumentEntry {
                    policy_id: e.policy_id.clone(),
                    psi: states.iter().map(|s| e.psi[map.index(s)]).collect(),
                })
                .collect(),
        };
        serde_json::to_string(&doc).expect("successor features serialize")
    }

    pub fn from_json(map: &GridMap, text: &str) -> Result<Self, String> {
        let doc: SfDocument = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if doc.version != SF_DOCUMENT_VERSION {
            return Err(format!("unsupported successor feature document version {}", doc.version));
        }
        if doc.map_fingerprint != map.fingerprint() || doc.width != map.width() || doc.height != map.height() {
            return Err("successor feature document was computed for a different map".into());
        }
        let mut entries = Vec::with_capacity(doc.entries.len());
        for e in doc.entries {
            if e.psi.len() != doc.states.len() {
                return Err(format!("entry {} has {} rows for {} states", e.policy_id, e.psi.len(), doc.states.len()));
            }
            let mut psi = vec![[0.0; NUM_FEATURES]; map.num_cells()];
            for ([x, y], row) in doc.states.iter().zip(e.psi) {
                if !map.in_bounds(*x, *y) {
                    return Err(format!("state ({x}, {y}) is outside the map"));
                }
                psi[y * map.width() + x] = row;
            }
            entries.push(SuccessorFeatures { policy_id: e.policy_id, psi });
        }
        Ok(SuccessorFeatureSet { entries, gamma: doc.gamma, map_fingerprint: doc.map_fingerprint, width: doc.width })
    }
}

/// A weight vector drawn uniformly from the unit sphere in feature space.
pub fn sample_unit_sphere(rng: &mut ChaCha8Rng) -> LinearReward {
    loop {
        let v: [f64; NUM_FEATURES] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return LinearReward(v.map(|x| x / norm));
        }
    }
}

/// Mean discounted feature counts of a policy over the start distribution.
pub fn mean_feature_counts(map: &GridMap, psi: &[[f64; NUM_FEATURES]]) -> [f64; NUM_FEATURES] {
    let mut out = [0.0; NUM_FEATURES];
    for (s, p) in map.start_distribution() {
        for (o, v) in out.iter_mut().zip(psi[map.index(&s)]) {
            *o += p * v;
        }
    }
    out
}

/// Candidate set: entry 0 is the uniform-random policy, the rest are
/// maximum-entropy optimal policies for sampled weights.
///
/// Each weight vector is a uniform draw from the unit sphere, divided
/// component-wise by the uniform policy's mean discounted feature counts.
/// Without this, per-step components (paid on every move) swamp terminal
/// components (paid once) for almost every draw.
pub fn generate_candidate_sf_set(map: &GridMap, k: usize, seed: u64) -> Result<SuccessorFeatureSet, PlanError> {
    if k < 2 {
        return Err(PlanError::TooFewCandidates(k));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = successor_features(map, &Policy::uniform(map), DEFAULT_GAMMA, DEFAULT_TOL)?;
    let counts = mean_feature_counts(map, &uniform).map(|c| if c > 1e-9 { c } else { 1.0 });
    let mut entries = Vec::with_capacity(k);
    entries.push(SuccessorFeatures { policy_id: "uniform".into(), psi: uniform });
    for i in 1..k {
        let u = sample_unit_sphere(&mut rng);
        let w = LinearReward(std::array::from_fn(|f| u.0[f] / counts[f]));
        let vt = value_iteration(map, &w, DEFAULT_GAMMA, DEFAULT_TOL)?;
        let policy = maxent_optimal_policy(&vt, DEFAULT_TIE_TOL);
        entries.push(SuccessorFeatures {
            policy_id: format!("sphere-{i}"),
            psi: successor_features(map, &policy, DEFAULT_GAMMA, DEFAULT_TOL)?,
        });
    }
    Ok(SuccessorFeatureSet::new(map, DEFAULT_GAMMA, entries))
}
