//! Everything fixed at startup: maps and their optimal values, the segment
//! pair pools, practice pairs and teaching exercises.
//!
//! The trained and question experiments share one pool, so arms of both
//! experiments label the same pairs. A pool is cut into blocks of
//! `pairs_per_session - 1` pairs; the k-th fresh session of every arm gets
//! block k, and each session ends with its pool's attention pair.

use std::collections::HashMap;

use prefbench_core::dataset::{
    sample_pair_distinct_starts, sample_pair_random, sample_pair_terminal, Polarity, SEGMENT_ACTIONS,
};
use prefbench_core::mdp::{Surface, FEATURE_NAMES};
use prefbench_core::planner::{value_iteration, ValueTable, DEFAULT_GAMMA, DEFAULT_TOL};
use prefbench_core::preference::{
    noiseless_label, partial_return, regret_d, ModelKind, PreferenceLabel, PreferenceModelSpec, Segment, Values,
};
use prefbench_core::{GridMap, LinearReward};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::condition::{Arm, Experiment, Stage};
use crate::config::{load_map, PoolConfig, ServiceConfig};
use crate::content::{Content, Statistic};
use crate::error::ServiceError;

/// Pairs per practice set.
pub const PRACTICE_PAIRS: usize = 6;
/// Random draws searched for practice pairs of each kind.
const PRACTICE_SEARCH: usize = 200_000;
/// Accepted distance between an exercise answer and the true value.
pub const EXERCISE_TOLERANCE: f64 = 0.5;

const GT: LinearReward = LinearReward::GROUND_TRUTH;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PoolKind {
    /// Trained and question experiments.
    Shared,
    Privileged,
}

impl PoolKind {
    pub fn of(e: Experiment) -> PoolKind {
        match e {
            Experiment::Privileged => PoolKind::Privileged,
            Experiment::Trained | Experiment::Question => PoolKind::Shared,
        }
    }

    fn prefix(self) -> &'static str {
        match self {
            PoolKind::Shared => "s",
            PoolKind::Privileged => "v",
        }
    }

    fn stream(self) -> u64 {
        match self {
            PoolKind::Shared => 10,
            PoolKind::Privileged => 20,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PairDef {
    pub pair_id: String,
    /// Index into [`World::maps`]; 0 is the elicitation map.
    pub map: usize,
    pub sigma1: Segment,
    pub sigma2: Segment,
}

#[derive(Clone, Debug)]
pub struct Pool {
    pub pairs: Vec<usize>,
    pub attention: usize,
}

#[derive(Clone, Debug)]
pub struct Exercise {
    pub map: usize,
    pub segment: Segment,
}

pub struct World {
    pub maps: Vec<(GridMap, ValueTable)>,
    pub pairs: Vec<PairDef>,
    by_id: HashMap<String, usize>,
    pools: HashMap<PoolKind, Pool>,
    /// Three sets of practice pairs, in serving order.
    pub practice: [Vec<usize>; 3],
    /// A pair on which the two models disagree, used for the worked example.
    pub example: usize,
    pub exercises: HashMap<Statistic, Vec<Exercise>>,
    pub content: Content,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sheep_terminated(map: &GridMap, s: &Segment) -> bool {
    s.terminated() && map.cell(s.end().x, s.end().y).surface == Surface::Sheep
}

impl World {
    pub fn build(cfg: &ServiceConfig) -> Result<World, ServiceError> {
        let content = Content::load(cfg.content_dir.as_deref())?;
        let mut maps = Vec::new();
        for spec in std::iter::once(&cfg.map).chain(&cfg.practice_maps) {
            let map = load_map(spec)?;
            let vt = value_iteration(&map, &GT, DEFAULT_GAMMA, DEFAULT_TOL)?;
            maps.push((map, vt));
        }
        let mut world = World {
            maps,
            pairs: Vec::new(),
            by_id: HashMap::new(),
            pools: HashMap::new(),
            practice: Default::default(),
            example: 0,
            exercises: HashMap::new(),
            content,
        };
        for kind in [PoolKind::Shared, PoolKind::Privileged] {
            let experiment = if kind == PoolKind::Shared { Experiment::Trained } else { Experiment::Privileged };
            world.build_pool(kind, cfg.pool_for(experiment), cfg.seed)?;
        }
        world.build_practice(cfg.seed)?;
        world.build_exercises(cfg.seed)?;
        Ok(world)
    }

    fn push(&mut self, pair_id: String, map: usize, (sigma1, sigma2): (Segment, Segment)) -> usize {
        let i = self.pairs.len();
        self.by_id.insert(pair_id.clone(), i);
        self.pairs.push(PairDef { pair_id, map, sigma1, sigma2 });
        i
    }

    fn build_pool(&mut self, kind: PoolKind, cfg: &PoolConfig, seed: u64) -> Result<(), ServiceError> {
        let map = self.maps[0].0.clone();
        let mut rng = stream_rng(seed, kind.stream());
        let mut drawn = Vec::with_capacity(cfg.random_pairs + cfg.terminal_pairs);
        for _ in 0..cfg.random_pairs {
            drawn.push(if cfg.distinct_starts {
                sample_pair_distinct_starts(&map, SEGMENT_ACTIONS, &mut rng)?
            } else {
                sample_pair_random(&map, SEGMENT_ACTIONS, &mut rng)?
            });
        }
        for i in 0..cfg.terminal_pairs {
            let polarity = if i % 2 == 0 { Polarity::Positive } else { Polarity::Negative };
            drawn.push(sample_pair_terminal(&map, polarity, &mut rng)?);
        }
        drawn.shuffle(&mut rng);
        let pairs =
            drawn.into_iter().enumerate().map(|(i, p)| self.push(format!("{}{i:04}", kind.prefix()), 0, p)).collect();
        let attention_pair = sample_pair_terminal(&map, Polarity::Negative, &mut stream_rng(seed, kind.stream() + 1))?;
        let attention = self.push(format!("{}-attention", kind.prefix()), 0, attention_pair);
        self.pools.insert(kind, Pool { pairs, attention });
        Ok(())
    }

    /// Practice pairs on the teaching maps: in each set two pairs with equal
    /// scores so far, two on which the models disagree and two on which they
    /// agree. Both trained arms see the same pairs.
    fn build_practice(&mut self, seed: u64) -> Result<(), ServiceError> {
        let mut rng = stream_rng(seed, 30);
        let per_kind = PRACTICE_PAIRS / 3;
        let needed = per_kind * self.practice.len();
        let mut kinds: [Vec<(usize, (Segment, Segment))>; 3] = Default::default();
        let mut seen = std::collections::HashSet::new();
        let practice_maps = 1..self.maps.len();
        for draw in 0..PRACTICE_SEARCH {
            if kinds.iter().all(|k| k.len() > needed) {
                break;
            }
            let m = practice_maps.start + draw % practice_maps.len();
            let (map, vt) = &self.maps[m];
            let (a, b) = sample_pair_random(map, SEGMENT_ACTIONS, &mut rng)?;
            if a == b || !seen.insert((m, a.actions().to_vec(), b.actions().to_vec(), a.start())) {
                continue;
            }
            let pr =
                noiseless_label(&PreferenceModelSpec::noiseless(ModelKind::PartialReturn), &a, &b, &GT, Values::None)?;
            let rg =
                noiseless_label(&PreferenceModelSpec::noiseless(ModelKind::Regret), &a, &b, &GT, Values::Exact(vt))?;
            let kind = match (pr, rg) {
                (PreferenceLabel::Tie, _) => 0,
                (_, PreferenceLabel::Tie) => continue,
                (x, y) if x != y => 1,
                _ => 2,
            };
            if kinds[kind].len() <= needed {
                kinds[kind].push((m, (a, b)));
            }
        }
        if kinds.iter().any(|k| k.len() <= needed) {
            return Err(ServiceError::Content("the practice maps do not yield enough practice pairs".into()));
        }
        let [ties, disagree, agree] = kinds;
        let example = disagree[needed].clone();
        self.example = self.push("example".into(), example.0, example.1);
        for set in 0..self.practice.len() {
            let mut picked: Vec<(usize, (Segment, Segment))> = [&ties, &disagree, &agree]
                .iter()
                .flat_map(|k| k[per_kind * set..per_kind * (set + 1)].iter().cloned())
                .collect();
            picked.shuffle(&mut rng);
            let ids = picked
                .into_iter()
                .enumerate()
                .map(|(i, (m, p))| self.push(format!("practice{}-{}", set + 1, i + 1), m, p))
                .collect();
            self.practice[set] = ids;
        }
        Ok(())
    }

    fn build_exercises(&mut self, seed: u64) -> Result<(), ServiceError> {
        let mut rng = stream_rng(seed, 40);
        let count = self.content.items.iter().map(|i| i.count).max().unwrap_or(0);
        for statistic in
            [Statistic::ScoreSoFar, Statistic::BiggestPossibleScoreIncrease, Statistic::BiggestPossibleFinalScore]
        {
            let mut list = Vec::with_capacity(count);
            for k in 0..count {
                let m = 1 + k % (self.maps.len() - 1);
                let (segment, _) = sample_pair_random(&self.maps[m].0, SEGMENT_ACTIONS, &mut rng)?;
                list.push(Exercise { map: m, segment });
            }
            self.exercises.insert(statistic, list);
        }
        Ok(())
    }

    pub fn pool(&self, e: Experiment) -> &Pool {
        &self.pools[&PoolKind::of(e)]
    }

    pub fn pair_index(&self, pair_id: &str) -> Option<usize> {
        self.by_id.get(pair_id).copied()
    }

    pub fn main_map(&self) -> &GridMap {
        &self.maps[0].0
    }

    /// Number of disjoint blocks the pool of `e` can hand out.
    pub fn block_count(&self, e: Experiment, pairs_per_session: usize) -> usize {
        self.pool(e).pairs.len() / (pairs_per_session - 1)
    }

    pub fn is_sheep_terminated(&self, map: usize, s: &Segment) -> bool {
        sheep_terminated(&self.maps[map].0, s)
    }

    /// Statistic of a segment on map `m` under the ground-truth reward.
    pub fn statistic(&self, m: usize, s: &Segment, statistic: Statistic) -> f64 {
        let vt = &self.maps[m].1;
        match statistic {
            Statistic::ScoreSoFar => partial_return(s, &GT),
            Statistic::BiggestPossibleScoreIncrease => vt.value(&s.end()),
            Statistic::BiggestPossibleFinalScore => partial_return(s, &GT) + vt.value(&s.end()),
        }
    }

    /// What the taught model of `arm` prefers between `a` and `b` on map `m`.
    pub fn target_label(
        &self,
        arm: Arm,
        m: usize,
        a: &Segment,
        b: &Segment,
    ) -> Result<Option<PreferenceLabel>, ServiceError> {
        let vt = &self.maps[m].1;
        let (kind, values) = match arm {
            Arm::Control => return Ok(None),
            Arm::PartialReturn => (ModelKind::PartialReturn, Values::None),
            Arm::Regret => (ModelKind::Regret, Values::Exact(vt)),
        };
        Ok(Some(noiseless_label(&PreferenceModelSpec::noiseless(kind), a, b, &GT, values)?))
    }

    pub fn taught(&self, arm: Arm, m: usize, s: &Segment) -> TaughtStatistics {
        let regret = arm == Arm::Regret;
        TaughtStatistics {
            score_so_far: self.statistic(m, s, Statistic::ScoreSoFar),
            biggest_possible_score_increase: regret
                .then(|| self.statistic(m, s, Statistic::BiggestPossibleScoreIncrease)),
            biggest_possible_final_score: regret.then(|| self.statistic(m, s, Statistic::BiggestPossibleFinalScore)),
        }
    }

    /// Statistics displayed next to a segment in the privileged experiment.
    pub fn privileged(&self, arm: Arm, m: usize, s: &Segment) -> Result<Option<PrivilegedStatistics>, ServiceError> {
        let (map, vt) = &self.maps[m];
        Ok(match arm {
            Arm::Control => None,
            Arm::PartialReturn => {
                let transitions = s
                    .actions()
                    .iter()
                    .zip(s.phis())
                    .map(|(a, phi)| TransitionView {
                        action: *a,
                        reward: GT.reward(phi),
                        components: FEATURE_NAMES
                            .iter()
                            .enumerate()
                            .filter(|(f, _)| phi.0[*f] > 0)
                            .map(|(f, name)| Component { name, count: phi.0[f], value: GT.0[f] * phi.0[f] as f64 })
                            .collect(),
                    })
                    .collect();
                Some(PrivilegedStatistics::PartialReturn { score: partial_return(s, &GT), transitions })
            }
            Arm::Regret => {
                debug_assert!(vt.matches(map, &GT));
                let from_start = vt.value(&s.start());
                let given_moves = partial_return(s, &GT) + vt.value(&s.end());
                Some(PrivilegedStatistics::Regret {
                    best_possible_score_from_start: from_start,
                    best_possible_score_given_your_moves: given_moves,
                    opportunity_cost: regret_d(s, &GT, vt)?,
                })
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Component {
    pub name: &'static str,
    pub count: u32,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransitionView {
    pub action: prefbench_core::Action,
    pub reward: f64,
    pub components: Vec<Component>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrivilegedStatistics {
    PartialReturn { score: f64, transitions: Vec<TransitionView> },
    Regret { best_possible_score_from_start: f64, best_possible_score_given_your_moves: f64, opportunity_cost: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaughtStatistics {
    pub score_so_far: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub biggest_possible_score_increase: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub biggest_possible_final_score: Option<f64>,
}

/// Practice stage to practice set index.
pub fn practice_set(stage: Stage) -> Option<usize> {
    match stage {
        Stage::Practice1 => Some(0),
        Stage::Practice2 => Some(1),
        Stage::Practice3 => Some(2),
        _ => None,
    }
}
