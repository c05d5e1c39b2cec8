//! Segment-pair sampling, preference datasets and their JSONL form.
//!
//! A dataset file starts with a header line carrying the schema tag, the map
//! fingerprint and provenance, followed by one sample per line. Segments are
//! stored as a start state plus actions and rebuilt against the map on read.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::DatasetError;
use crate::mdp::{Action, GridMap, LinearReward, State, Surface};
use crate::planner::{value_iteration, DEFAULT_GAMMA, DEFAULT_TOL};
use crate::preference::{label_pair, ModelKind, PreferenceLabel, PreferenceModelSpec, Segment, Values};

pub const DATASET_SCHEMA: &str = "prefbench.dataset/1";

/// Segment length used by both pair samplers.
pub const SEGMENT_ACTIONS: usize = 3;

/// Attempts allowed when resampling a segment that terminated.
pub const RESAMPLE_CAP: usize = 1000;

/// A stored response. `Same` and `CantTell` are not strict preferences;
/// only `Same` has a distributional meaning.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    First,
    Second,
    Same,
    CantTell,
}

impl Label {
    pub fn preference(self) -> Option<PreferenceLabel> {
        match self {
            Label::First => Some(PreferenceLabel::First),
            Label::Second => Some(PreferenceLabel::Second),
            Label::Same => Some(PreferenceLabel::Tie),
            Label::CantTell => None,
        }
    }

    pub fn is_strict(self) -> bool {
        matches!(self, Label::First | Label::Second)
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::First => Label::Second,
            Label::Second => Label::First,
            other => other,
        }
    }
}

impl From<PreferenceLabel> for Label {
    fn from(p: PreferenceLabel) -> Self {
        match p {
            PreferenceLabel::First => Label::First,
            PreferenceLabel::Second => Label::Second,
            PreferenceLabel::Tie => Label::Same,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Human,
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PreferenceSample {
    pub pair_id: String,
    pub sigma1: Segment,
    pub sigma2: Segment,
    pub label: Label,
    pub source: Source,
    pub annotator_id: Option<String>,
    pub condition: Option<String>,
}

impl PreferenceSample {
    /// The same comparison with segment order and label reversed.
    pub fn flipped(&self) -> Self {
        PreferenceSample {
            sigma1: self.sigma2.clone(),
            sigma2: self.sigma1.clone(),
            label: self.label.flipped(),
            ..self.clone()
        }
    }

    /// True if either segment ends in a terminal state.
    pub fn has_terminal_segment(&self) -> bool {
        self.sigma1.terminated() || self.sigma2.terminated()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub protocol: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub counts: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator: Option<PreferenceModelSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreferenceDataset {
    pub map_fingerprint: String,
    pub provenance: Provenance,
    pub samples: Vec<PreferenceSample>,
}

impl PreferenceDataset {
    pub fn new(map: &GridMap, provenance: Provenance) -> Self {
        PreferenceDataset { map_fingerprint: map.fingerprint(), provenance, samples: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Same header, different samples.
    pub fn with_samples(&self, samples: Vec<PreferenceSample>) -> Self {
        PreferenceDataset {
            map_fingerprint: self.map_fingerprint.clone(),
            provenance: self.provenance.clone(),
            samples,
        }
    }

    /// Keeps only first/second labels.
    pub fn strict_only(&self) -> Self {
        self.with_samples(self.samples.iter().filter(|s| s.label.is_strict()).cloned().collect())
    }

    /// Drops every pair in which a segment terminates.
    pub fn without_terminal_pairs(&self) -> Self {
        self.with_samples(self.samples.iter().filter(|s| !s.has_terminal_segment()).cloned().collect())
    }
}

/// Rolls out up to `num_actions` uniformly random actions, stopping early
/// at a terminal.
pub fn sample_segment<R: Rng + ?Sized>(map: &GridMap, start: State, num_actions: usize, rng: &mut R) -> Segment {
    let mut actions = Vec::with_capacity(num_actions);
    let mut s = start;
    for _ in 0..num_actions {
        if s.terminal {
            break;
        }
        let a = *Action::ALL.choose(rng).expect("four actions");
        s = map.step(&s, a).expect("non-terminal state").next;
        actions.push(a);
    }
    Segment::from_actions(map, start, &actions).expect("sampled actions are valid")
}

fn sample_non_terminating<R: Rng + ?Sized>(
    map: &GridMap,
    start: State,
    num_actions: usize,
    rng: &mut R,
) -> Result<Segment, DatasetError> {
    for _ in 0..RESAMPLE_CAP {
        let seg = sample_segment(map, start, num_actions, rng);
        if !seg.terminated() {
            return Ok(seg);
        }
    }
    Err(DatasetError::ResampleCap { x: start.x, y: start.y, attempts: RESAMPLE_CAP })
}

/// Two independent random segments from one uniformly drawn start state,
/// each resampled until it does not terminate.
pub fn sample_pair_random<R: Rng + ?Sized>(
    map: &GridMap,
    num_actions: usize,
    rng: &mut R,
) -> Result<(Segment, Segment), DatasetError> {
    let starts = map.start_states();
    let start = *starts.choose(rng).expect("maps have a non-terminal state");
    let a = sample_non_terminating(map, start, num_actions, rng)?;
    let b = sample_non_terminating(map, start, num_actions, rng)?;
    Ok((a, b))
}

/// Like [`sample_pair_random`] but each segment gets its own start state.
pub fn sample_pair_distinct_starts<R: Rng + ?Sized>(
    map: &GridMap,
    num_actions: usize,
    rng: &mut R,
) -> Result<(Segment, Segment), DatasetError> {
    let starts = map.start_states();
    let s1 = *starts.choose(rng).expect("maps have a non-terminal state");
    let s2 = *starts.choose(rng).expect("maps have a non-terminal state");
    Ok((sample_non_terminating(map, s1, num_actions, rng)?, sample_non_terminating(map, s2, num_actions, rng)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Ends at a goal.
    Positive,
    /// Ends at a sheep.
    Negative,
}

impl Polarity {
    fn surface(self) -> Surface {
        match self {
            Polarity::Positive => Surface::Goal,
            Polarity::Negative => Surface::Sheep,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Polarity::Positive => "goal",
            Polarity::Negative => "sheep",
        }
    }
}

/// Action sequences of one or two actions from `start` whose last step
/// enters a terminal of the given polarity.
pub fn terminal_sequences(map: &GridMap, start: State, polarity: Polarity) -> Vec<Vec<Action>> {
    let target = polarity.surface();
    let hits = |s: &State| s.terminal && map.cell(s.x, s.y).surface == target;
    let mut out = Vec::new();
    for a in Action::ALL {
        let t = map.step(&start, a).expect("non-terminal start");
        if t.terminal {
            if hits(&t.next) {
                out.push(vec![a]);
            }
            continue;
        }
        for b in Action::ALL {
            let t2 = map.step(&t.next, b).expect("non-terminal state");
            if hits(&t2.next) {
                out.push(vec![a, b]);
            }
        }
    }
    out
}

/// Same-start pair where one segment reaches a terminal of `polarity` in
/// fewer than three actions and the other takes three actions without
/// terminating. Segment order is uniformly random.
pub fn sample_pair_terminal<R: Rng + ?Sized>(
    map: &GridMap,
    polarity: Polarity,
    rng: &mut R,
) -> Result<(Segment, Segment), DatasetError> {
    let qualifying: Vec<(State, Vec<Vec<Action>>)> = map
        .start_states()
        .into_iter()
        .map(|s| (s, terminal_sequences(map, s, polarity)))
        .filter(|(_, seqs)| !seqs.is_empty())
        .collect();
    let (start, seqs) = qualifying.choose(rng).ok_or(DatasetError::NoQualifyingStart(polarity.name()))?;
    let actions = seqs.choose(rng).expect("non-empty");
    let terminal = Segment::from_actions(map, *start, actions)?;
    let other = sample_non_terminating(map, *start, SEGMENT_ACTIONS, rng)?;
    Ok(if rng.random::<bool>() { (terminal, other) } else { (other, terminal) })
}

fn labeling_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// `n_random` random pairs plus `n_terminal` terminal pairs (alternating
/// goal and sheep polarity), shuffled and labeled by the annotator `spec`
/// under `w`. Pairs depend only on the seed and the map, so annotators with
/// the same seed label the same pairs.
pub fn synth_dataset(
    map: &GridMap,
    w: &LinearReward,
    spec: &PreferenceModelSpec,
    n_random: usize,
    n_terminal: usize,
    seed: u64,
) -> Result<PreferenceDataset, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n_random + n_terminal);
    for _ in 0..n_random {
        pairs.push(sample_pair_random(map, SEGMENT_ACTIONS, &mut rng)?);
    }
    for i in 0..n_terminal {
        let polarity = if i % 2 == 0 { Polarity::Positive } else { Polarity::Negative };
        pairs.push(sample_pair_terminal(map, polarity, &mut rng)?);
    }
    pairs.shuffle(&mut rng);

    let vt = match spec.kind {
        ModelKind::Regret => Some(value_iteration(map, w, DEFAULT_GAMMA, DEFAULT_TOL)?),
        ModelKind::PartialReturn => None,
    };
    let values = vt.as_ref().map_or(Values::None, Values::Exact);
    let mut label_rng = labeling_rng(seed);
    let mut samples = Vec::with_capacity(pairs.len());
    for (i, (sigma1, sigma2)) in pairs.into_iter().enumerate() {
        let label = label_pair(spec, &sigma1, &sigma2, w, values, &mut label_rng)?;
        samples.push(PreferenceSample {
            pair_id: format!("p{i:04}"),
            sigma1,
            sigma2,
            label: label.into(),
            source: Source::Synthetic,
            annotator_id: None,
            condition: None,
        });
    }
    let provenance = Provenance {
        protocol: "synthetic".into(),
        seed: Some(seed),
        counts: BTreeMap::from([("random".into(), n_random as u64), ("terminal".into(), n_terminal as u64)]),
        annotator: Some(*spec),
    };
    Ok(PreferenceDataset { map_fingerprint: map.fingerprint(), provenance, samples })
}

/// Each sample followed by its flipped copy.
pub fn double_with_flips(d: &PreferenceDataset) -> PreferenceDataset {
    let samples = d.samples.iter().flat_map(|s| [s.clone(), s.flipped()]).collect();
    d.with_samples(samples)
}

/// Appends `count` goal-terminal pairs labeled by the noiseless
/// partial-return model under `w_gt`.
pub fn augment_identifiability(
    d: &PreferenceDataset,
    map: &GridMap,
    w_gt: &LinearReward,
    count: usize,
    seed: u64,
) -> Result<PreferenceDataset, DatasetError> {
    if d.map_fingerprint != map.fingerprint() {
        return Err(DatasetError::FingerprintMismatch {
            expected: map.fingerprint(),
            found: d.map_fingerprint.clone(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = PreferenceModelSpec::noiseless(ModelKind::PartialReturn);
    let mut out = d.clone();
    for i in 0..count {
        let (sigma1, sigma2) = sample_pair_terminal(map, Polarity::Positive, &mut rng)?;
        let label = label_pair(&spec, &sigma1, &sigma2, w_gt, Values::None, &mut rng)?;
        out.samples.push(PreferenceSample {
            pair_id: format!("aug{i:03}"),
            sigma1,
            sigma2,
            label: label.into(),
            source: Source::Synthetic,
            annotator_id: None,
            condition: None,
        });
    }
    *out.provenance.counts.entry("identifiability".into()).or_insert(0) += count as u64;
    Ok(out)
}

/// Occurrence-indexed pair keys, so repeated pair ids (one per annotator)
/// align one-to-one across datasets.
fn keyed(d: &PreferenceDataset) -> Vec<((String, usize), &PreferenceSample)> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    d.samples
        .iter()
        .map(|s| {
            let n = seen.entry(s.pair_id.as_str()).or_insert(0);
            let key = (s.pair_id.clone(), *n);
            *n += 1;
            (key, s)
        })
        .collect()
}

/// Restricts every dataset to the pairs that carry a strict preference in
/// all of them, in the first dataset's order.
pub fn align_paired(datasets: &[PreferenceDataset]) -> Result<Vec<PreferenceDataset>, DatasetError> {
    let Some(first) = datasets.first() else {
        return Err(DatasetError::EmptyIntersection);
    };
    if datasets.iter().any(|d| d.map_fingerprint != first.map_fingerprint) {
        return Err(DatasetError::MixedMaps);
    }
    let keyed: Vec<Vec<((String, usize), &PreferenceSample)>> = datasets.iter().map(keyed).collect();
    let strict_sets: Vec<HashSet<&(String, usize)>> =
        keyed.iter().map(|k| k.iter().filter(|(_, s)| s.label.is_strict()).map(|(k, _)| k).collect()).collect();
    let order: Vec<&(String, usize)> =
        keyed[0].iter().map(|(k, _)| k).filter(|k| strict_sets.iter().all(|set| set.contains(k))).collect();
    if order.is_empty() {
        return Err(DatasetError::EmptyIntersection);
    }
    Ok(datasets
        .iter()
        .zip(&keyed)
        .map(|(d, k)| {
            let lookup: HashMap<&(String, usize), &PreferenceSample> = k.iter().map(|(key, s)| (key, *s)).collect();
            d.with_samples(order.iter().map(|key| lookup[key].clone()).collect())
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema: String,
    map_fingerprint: String,
    provenance: Provenance,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Position {
    x: usize,
    y: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start: Option<Position>,
    actions: Vec<Action>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleRecord {
    pair_id: String,
    condition: Option<String>,
    annotator_id: Option<String>,
    source: Source,
    start: Position,
    segment1: SegmentRecord,
    segment2: SegmentRecord,
    label: Label,
}

fn position(s: &State) -> Position {
    Position { x: s.x, y: s.y }
}

fn record(sample: &PreferenceSample) -> SampleRecord {
    let start = sample.sigma1.start();
    let seg = |s: &Segment| SegmentRecord {
        start: (s.start() != start).then(|| position(&s.start())),
        actions: s.actions().to_vec(),
    };
    SampleRecord {
        pair_id: sample.pair_id.clone(),
        condition: sample.condition.clone(),
        annotator_id: sample.annotator_id.clone(),
        source: sample.source,
        start: position(&start),
        segment1: seg(&sample.sigma1),
        segment2: seg(&sample.sigma2),
        label: sample.label,
    }
}

/// One JSON line for a sample, without trailing newline.
pub fn sample_to_json(sample: &PreferenceSample) -> String {
    serde_json::to_string(&record(sample)).expect("sample serializes")
}

pub fn write_dataset<W: Write>(d: &PreferenceDataset, mut out: W) -> Result<(), DatasetError> {
    let header = Header {
        schema: DATASET_SCHEMA.into(),
        map_fingerprint: d.map_fingerprint.clone(),
        provenance: d.provenance.clone(),
    };
    writeln!(out, "{}", serde_json::to_string(&header).expect("header serializes"))?;
    for s in &d.samples {
        writeln!(out, "{}", sample_to_json(s))?;
    }
    Ok(())
}

pub fn dataset_to_string(d: &PreferenceDataset) -> String {
    let mut buf = Vec::new();
    write_dataset(d, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

fn rebuild(map: &GridMap, line: usize, r: SampleRecord) -> Result<PreferenceSample, DatasetError> {
    let parse_err = |message: String| DatasetError::Parse { line, message };
    let state = |p: Position| {
        map.state_at(p.x, p.y).ok_or_else(|| parse_err(format!("({}, {}) is not a state of the map", p.x, p.y)))
    };
    let start = state(r.start)?;
    let seg = |rec: &SegmentRecord| -> Result<Segment, DatasetError> {
        let s = match rec.start {
            Some(p) => state(p)?,
            None => start,
        };
        Segment::from_actions(map, s, &rec.actions).map_err(|e| parse_err(e.to_string()))
    };
    Ok(PreferenceSample {
        sigma1: seg(&r.segment1)?,
        sigma2: seg(&r.segment2)?,
        pair_id: r.pair_id,
        label: r.label,
        source: r.source,
        annotator_id: r.annotator_id,
        condition: r.condition,
    })
}

/// Parses one sample line against `map`. `line` is used in errors.
pub fn sample_from_json(map: &GridMap, line: usize, text: &str) -> Result<PreferenceSample, DatasetError> {
    let r: SampleRecord =
        serde_json::from_str(text).map_err(|e| DatasetError::Parse { line, message: e.to_string() })?;
    rebuild(map, line, r)
}

/// Reads a JSONL dataset. An empty input is an empty dataset for `map`.
pub fn read_dataset<R: BufRead>(map: &GridMap, input: R) -> Result<PreferenceDataset, DatasetError> {
    let mut lines = input.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(l) if l.trim().is_empty() => None,
        other => Some((i + 1, other)),
    });
    let Some((line, header)) = lines.next() else {
        return Ok(PreferenceDataset::new(map, Provenance::default()));
    };
    let header: Header =
        serde_json::from_str(&header?).map_err(|e| DatasetError::Parse { line, message: e.to_string() })?;
    if header.schema != DATASET_SCHEMA {
        return Err(DatasetError::Parse { line, message: format!("unsupported schema {:?}", header.schema) });
    }
    if header.map_fingerprint != map.fingerprint() {
        return Err(DatasetError::FingerprintMismatch { expected: map.fingerprint(), found: header.map_fingerprint });
    }
    let mut samples = Vec::new();
    for (line, text) in lines {
        samples.push(sample_from_json(map, line, &text?)?);
    }
    Ok(PreferenceDataset { map_fingerprint: header.map_fingerprint, provenance: header.provenance, samples })
}

pub fn dataset_from_str(map: &GridMap, text: &str) -> Result<PreferenceDataset, DatasetError> {
    read_dataset(map, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preference::partial_return;

    const GT: LinearReward = LinearReward::GROUND_TRUTH;

    #[test]
    fn forced_terminal_segment() {
        let map = GridMap::parse("m", "HHH\nHSG\nHHH\n").unwrap();
        let start = map.state_at(1, 1).unwrap();
        // Only "right" moves; the rest bump. Run until a terminal is hit.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut saw_terminal = false;
        for _ in 0..50 {
            let seg = sample_segment(&map, start, 3, &mut rng);
            assert!(seg.len() <= 3);
            if seg.terminated() {
                saw_terminal = true;
                assert_eq!(seg.actions().last(), Some(&Action::Right));
            }
        }
        assert!(saw_terminal);
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let map = crate::maps::delivery();
        let a = sample_pair_random(&map, 3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_pair_random(&map, 3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0.start(), a.0.start());
        assert_eq!(a.0.len(), 3);
        assert_eq!(a.1.len(), 3);
    }

    #[test]
    fn terminal_pair_shapes() {
        let map = crate::maps::delivery();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for polarity in [Polarity::Positive, Polarity::Negative] {
            for _ in 0..20 {
                let (a, b) = sample_pair_terminal(&map, polarity, &mut rng).unwrap();
                assert_eq!(a.start(), b.start());
                let (t, o) = if a.terminated() { (a, b) } else { (b, a) };
                assert!(t.len() < 3);
                let end = t.end();
                assert_eq!(map.cell(end.x, end.y).surface, polarity.surface());
                assert_eq!(o.len(), 3);
                assert!(!o.terminated());
            }
        }
    }

    #[test]
    fn no_qualifying_start() {
        let map = GridMap::parse("m", "....G\n").unwrap();
        let err = sample_pair_terminal(&map, Polarity::Negative, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, DatasetError::NoQualifyingStart("sheep")));
    }

    #[test]
    fn label_flip() {
        assert_eq!(Label::First.flipped(), Label::Second);
        assert_eq!(Label::Same.flipped(), Label::Same);
        assert_eq!(Label::CantTell.flipped(), Label::CantTell);
        assert_eq!(Label::CantTell.preference(), None);
    }

    #[test]
    fn noiseless_pr_labels_follow_returns() {
        let map = crate::maps::delivery();
        let spec = PreferenceModelSpec::noiseless(ModelKind::PartialReturn);
        let d = synth_dataset(&map, &GT, &spec, 60, 10, 2).unwrap();
        assert_eq!(d.len(), 70);
        for s in &d.samples {
            let diff = partial_return(&s.sigma1, &GT) - partial_return(&s.sigma2, &GT);
            let expected = if diff > 0.0 {
                Label::First
            } else if diff < 0.0 {
                Label::Second
            } else {
                Label::Same
            };
            assert_eq!(s.label, expected);
        }
    }

    #[test]
    fn doubling() {
        let map = crate::maps::teach_coins();
        let spec = PreferenceModelSpec::noiseless(ModelKind::PartialReturn);
        let d = synth_dataset(&map, &GT, &spec, 8, 2, 1).unwrap();
        let dd = double_with_flips(&d);
        assert_eq!(dd.len(), 20);
        let dddd = double_with_flips(&dd);
        assert_eq!(dddd.len(), 40);
        for (i, s) in d.samples.iter().enumerate() {
            let group = &dddd.samples[4 * i..4 * i + 4];
            assert_eq!(group.iter().filter(|g| *g == s).count(), 2);
            assert_eq!(group.iter().filter(|g| **g == s.flipped()).count(), 2);
        }
    }

    #[test]
    fn augmentation_adds_goal_pairs() {
        let map = crate::maps::delivery();
        let spec = PreferenceModelSpec::noiseless(ModelKind::PartialReturn);
        let d = synth_dataset(&map, &GT, &spec, 10, 0, 3).unwrap();
        let aug = augment_identifiability(&d, &map, &GT, 50, 3).unwrap();
        assert_eq!(aug.len(), 60);
        for s in &aug.samples[10..] {
            assert_eq!(s.source, Source::Synthetic);
            let (goal, other, goal_first) =
                if s.sigma1.terminated() { (&s.sigma1, &s.sigma2, true) } else { (&s.sigma2, &s.sigma1, false) };
            assert_eq!(map.cell(goal.end().x, goal.end().y).surface, Surface::Goal);
            if partial_return(goal, &GT) > partial_return(other, &GT) {
                assert_eq!(s.label, if goal_first { Label::First } else { Label::Second });
            }
        }
    }

    #[test]
    fn alignment() {
        let map = crate::maps::delivery();
        let spec = PreferenceModelSpec::noiseless(ModelKind::PartialReturn);
        let a = synth_dataset(&map, &GT, &spec, 20, 0, 5).unwrap().strict_only();
        let mut b = a.clone();
        b.samples[0].label = Label::CantTell;
        let removed = b.samples[0].pair_id.clone();
        let aligned = align_paired(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(aligned[0].len(), a.len() - 1);
        assert_eq!(aligned[1].len(), a.len() - 1);
        assert!(aligned.iter().all(|d| d.samples.iter().all(|s| s.pair_id != removed)));
        let ids = |d: &PreferenceDataset| d.samples.iter().map(|s| s.pair_id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&aligned[0]), ids(&aligned[1]));
        assert_eq!(align_paired(&aligned).unwrap(), aligned);

        let mut c = a.clone();
        for s in &mut c.samples {
            s.pair_id = format!("other-{}", s.pair_id);
        }
        assert!(matches!(align_paired(&[a, c]), Err(DatasetError::EmptyIntersection)));
    }

    #[test]
    fn jsonl_round_trip() {
        let map = crate::maps::delivery();
        let spec = PreferenceModelSpec::boltzmann(ModelKind::Regret, 0.5);
        let mut d = synth_dataset(&map, &GT, &spec, 15, 6, 8).unwrap();
        d.samples[0].annotator_id = Some("a1".into());
        d.samples[0].condition = Some("trained-regret".into());
        d.samples[1].label = Label::CantTell;
        let (s1, s2) = sample_pair_distinct_starts(&map, 3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        d.samples[2].sigma1 = s1;
        d.samples[2].sigma2 = s2;
        let text = dataset_to_string(&d);
        let back = dataset_from_str(&map, &text).unwrap();
        assert_eq!(back, d);
        assert_eq!(dataset_to_string(&back), text);
    }

    #[test]
    fn empty_and_malformed_input() {
        let map = crate::maps::delivery();
        let empty = dataset_from_str(&map, "").unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.map_fingerprint, map.fingerprint());

        let spec = PreferenceModelSpec::noiseless(ModelKind::PartialReturn);
        let d = synth_dataset(&map, &GT, &spec, 3, 0, 1).unwrap();
        let text = dataset_to_string(&d);
        let truncated = &text[..text.len() - 10];
        match dataset_from_str(&map, truncated) {
            Err(DatasetError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        let extra = text.replacen("\"label\"", "\"bogus\":1,\"label\"", 1);
        assert!(matches!(dataset_from_str(&map, &extra), Err(DatasetError::Parse { line: 2, .. })));
        let other = crate::maps::teach_coins();
        assert!(matches!(dataset_from_str(&other, &text), Err(DatasetError::FingerprintMismatch { .. })));
    }
}
