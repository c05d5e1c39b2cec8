//! One annotator's session: the fixed plan of items it walks through, the
//! responses recorded so far and the payloads served at each step.
//!
//! A session's plan is decided at creation. The cursor only moves forward,
//! one accepted response at a time, so the stage sequence can never skip or
//! repeat a step.

use std::collections::BTreeMap;

use prefbench_core::dataset::Label;
use prefbench_core::mdp::{Surface, FEATURE_NAMES};
use prefbench_core::preference::{PreferenceLabel, Segment};
use prefbench_core::{GridMap, LinearReward, State};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::condition::{Arm, Condition, Experiment, Stage, CONTROL_QUESTION};
use crate::content::{fill, ItemKind, Statistic};
use crate::error::ServiceError;
use crate::store::AssignedPair;
use crate::survey::{likert_for, questions_for, score_survey, SurveyAnswers, SurveyScore, LIKERT_MAX, LIKERT_MIN};
use crate::world::{practice_set, PrivilegedStatistics, TaughtStatistics, World, EXERCISE_TOLERANCE};

pub const CHOICES: [Label; 4] = [Label::First, Label::Second, Label::Same, Label::CantTell];

pub const SURVEY_ITEM: &str = "survey";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Answer {
    /// Acknowledges a teaching page.
    Ack,
    Preference {
        choice: Label,
    },
    /// A computed statistic for an exercise.
    Value {
        value: f64,
    },
}

/// Body of `POST /sessions/{id}/responses`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseInput {
    #[serde(alias = "pair_id")]
    pub item_id: String,
    #[serde(flatten)]
    pub answer: Answer,
}

#[derive(Clone, Debug)]
enum ItemDef {
    Page { content: usize },
    Exercise { statistic: Statistic, k: usize, content: usize },
    Pair { pair: usize, swapped: bool, question: &'static str },
    Survey,
}

#[derive(Clone, Debug)]
struct PlannedItem {
    stage: Stage,
    id: String,
    def: ItemDef,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecordedResponse {
    pub item_id: String,
    pub stage: Stage,
    pub answer: Answer,
    pub at_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurveyOutcome {
    pub answers: SurveyAnswers,
    pub score: SurveyScore,
    pub attention_passed: bool,
    pub kept: bool,
    pub at_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Feedback {
    Practice { correct: bool, target: Label, explanation: String, statistics: [TaughtStatistics; 2] },
    Exercise { correct: bool, expected: f64, tolerance: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MapView {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SegmentView {
    pub start: State,
    pub actions: Vec<prefbench_core::Action>,
    pub states: Vec<State>,
    pub terminated: bool,
    /// "goal" or "sheep" when the segment ends a trip.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub end: Option<&'static str>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExampleView {
    pub map: MapView,
    pub segments: [SegmentView; 2],
    pub statistics: [TaughtStatistics; 2],
    pub preferred: Label,
    pub explanation: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuestionView {
    pub id: &'static str,
    pub text: &'static str,
    pub multiple: bool,
    pub choices: &'static [&'static str],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LikertView {
    pub id: &'static str,
    pub text: &'static str,
    pub min: u8,
    pub max: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ItemPayload {
    Page {
        item_id: String,
        title: String,
        body: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        map: Option<MapView>,
        /// Money per reward component, in component order.
        #[serde(skip_serializing_if = "Option::is_none")]
        rewards: Option<BTreeMap<&'static str, f64>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        example: Option<Box<ExampleView>>,
    },
    Exercise {
        item_id: String,
        prompt: String,
        statistic: Statistic,
        map: MapView,
        segment: SegmentView,
    },
    Pair {
        item_id: String,
        pair_id: String,
        question: &'static str,
        map: MapView,
        segments: [SegmentView; 2],
        choices: [Label; 4],
        /// Whether the response will be graded.
        feedback: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        statistics: Option<[PrivilegedStatistics; 2]>,
    },
    Survey {
        questions: Vec<QuestionView>,
        likert: Vec<LikertView>,
    },
    Done {
        kept: bool,
        score: f64,
        max_score: f64,
        passed: bool,
        attention_passed: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NextItem {
    pub session_id: Uuid,
    pub condition: Condition,
    pub stage: Stage,
    /// Zero-based position in the plan; equals `total` once done.
    pub position: usize,
    pub total: usize,
    pub item: ItemPayload,
}

#[derive(Clone, Debug)]
pub struct Session {
    pub id: Uuid,
    pub token: String,
    pub condition: Condition,
    pub block: usize,
    pub replacement_of: Option<Uuid>,
    pub replaced_by: Option<Uuid>,
    pub assigned: Vec<AssignedPair>,
    pub responses: Vec<RecordedResponse>,
    pub survey: Option<SurveyOutcome>,
    plan: Vec<PlannedItem>,
}

/// A pair's segments in the order shown.
pub fn shown(world: &World, pair: usize, swapped: bool) -> (&Segment, &Segment) {
    let p = &world.pairs[pair];
    if swapped {
        (&p.sigma2, &p.sigma1)
    } else {
        (&p.sigma1, &p.sigma2)
    }
}

fn build_plan(world: &World, c: Condition, assigned: &[AssignedPair]) -> Result<Vec<PlannedItem>, ServiceError> {
    let mut plan = Vec::new();
    for &stage in c.stages() {
        match stage {
            Stage::DomainTeaching | Stage::StatisticTeaching | Stage::InstructedExample | Stage::AntiGuidance => {
                for (content, item) in world.content.items.iter().enumerate() {
                    if item.stage != stage || !item.applies_to(c) {
                        continue;
                    }
                    match (item.kind, item.statistic) {
                        (ItemKind::Exercise, Some(statistic)) => {
                            for k in 0..item.count {
                                let id = format!("{}-{}", item.id, k + 1);
                                plan.push(PlannedItem { stage, id, def: ItemDef::Exercise { statistic, k, content } });
                            }
                        }
                        _ => plan.push(PlannedItem { stage, id: item.id.clone(), def: ItemDef::Page { content } }),
                    }
                }
            }
            Stage::Practice1 | Stage::Practice2 | Stage::Practice3 => {
                let question = if stage == Stage::Practice1 { CONTROL_QUESTION } else { c.elicitation_question() };
                for &pair in &world.practice[practice_set(stage).expect("practice stage")] {
                    let id = world.pairs[pair].pair_id.clone();
                    plan.push(PlannedItem { stage, id, def: ItemDef::Pair { pair, swapped: false, question } });
                }
            }
            Stage::Elicitation => {
                for a in assigned {
                    let pair = world
                        .pair_index(&a.pair_id)
                        .ok_or_else(|| ServiceError::Store(format!("unknown pair {:?}", a.pair_id)))?;
                    let def = ItemDef::Pair { pair, swapped: a.swapped, question: c.elicitation_question() };
                    plan.push(PlannedItem { stage, id: a.pair_id.clone(), def });
                }
            }
            Stage::Survey => plan.push(PlannedItem { stage, id: SURVEY_ITEM.into(), def: ItemDef::Survey }),
            Stage::Done => {}
        }
    }
    Ok(plan)
}

fn map_view(map: &GridMap) -> MapView {
    MapView { name: map.name().to_string(), width: map.width(), height: map.height(), text: map.to_text() }
}

fn segment_view(map: &GridMap, s: &Segment) -> SegmentView {
    let end = s.end();
    let end_name = match map.cell(end.x, end.y).surface {
        _ if !s.terminated() => None,
        Surface::Goal => Some("goal"),
        Surface::Sheep => Some("sheep"),
        _ => None,
    };
    SegmentView {
        start: s.start(),
        actions: s.actions().to_vec(),
        states: s.states().to_vec(),
        terminated: s.terminated(),
        end: end_name,
    }
}

fn rewards_table() -> BTreeMap<&'static str, f64> {
    FEATURE_NAMES.iter().zip(LinearReward::GROUND_TRUTH.0).map(|(n, w)| (*n, w)).collect()
}

impl Session {
    pub fn new(
        world: &World,
        id: Uuid,
        token: String,
        condition: Condition,
        block: usize,
        replacement_of: Option<Uuid>,
        assigned: Vec<AssignedPair>,
    ) -> Result<Session, ServiceError> {
        let plan = build_plan(world, condition, &assigned)?;
        Ok(Session {
            id,
            token,
            condition,
            block,
            replacement_of,
            replaced_by: None,
            assigned,
            responses: Vec::new(),
            survey: None,
            plan,
        })
    }

    fn current(&self) -> Option<&PlannedItem> {
        if self.survey.is_some() {
            None
        } else {
            self.plan.get(self.responses.len())
        }
    }

    pub fn stage(&self) -> Stage {
        self.current().map_or(Stage::Done, |i| i.stage)
    }

    pub fn is_done(&self) -> bool {
        self.survey.is_some()
    }

    pub fn kept(&self) -> bool {
        self.survey.as_ref().is_some_and(|s| s.kept)
    }

    /// Item ids in serving order, survey included.
    pub fn plan_ids(&self) -> Vec<(Stage, &str)> {
        self.plan.iter().map(|i| (i.stage, i.id.as_str())).collect()
    }

    /// Validates a response against the cursor and computes its feedback
    /// without changing the session.
    pub fn check_response(&self, world: &World, input: &ResponseInput) -> Result<Option<Feedback>, ServiceError> {
        if self.responses.iter().any(|r| r.item_id == input.item_id) {
            return Err(ServiceError::Duplicate(input.item_id.clone()));
        }
        let Some(item) = self.current() else {
            return Err(ServiceError::SessionDone);
        };
        if item.id != input.item_id {
            return Err(ServiceError::OutOfOrder { expected: item.id.clone(), got: input.item_id.clone() });
        }
        let wrong = |expected: &str| Err(ServiceError::InvalidResponse(format!("{} expects {expected}", item.id)));
        match (&item.def, &input.answer) {
            (ItemDef::Page { .. }, Answer::Ack) => Ok(None),
            (ItemDef::Page { .. }, _) => wrong("an ack"),
            (ItemDef::Exercise { statistic, k, .. }, Answer::Value { value }) => {
                if !value.is_finite() {
                    return wrong("a finite value");
                }
                let ex = &world.exercises[statistic][*k % world.exercises[statistic].len()];
                let expected = world.statistic(ex.map, &ex.segment, *statistic);
                let correct = (value - expected).abs() <= EXERCISE_TOLERANCE;
                Ok(Some(Feedback::Exercise { correct, expected, tolerance: EXERCISE_TOLERANCE }))
            }
            (ItemDef::Exercise { .. }, _) => wrong("a value"),
            (ItemDef::Pair { pair, swapped, .. }, Answer::Preference { choice }) => {
                if !item.stage.gives_feedback() {
                    return Ok(None);
                }
                self.practice_feedback(world, *pair, *swapped, *choice).map(Some)
            }
            (ItemDef::Pair { .. }, _) => wrong("a preference"),
            (ItemDef::Survey, _) => Err(ServiceError::WrongStage(Stage::Survey)),
        }
    }

    fn practice_feedback(
        &self,
        world: &World,
        pair: usize,
        swapped: bool,
        choice: Label,
    ) -> Result<Feedback, ServiceError> {
        let arm = self.condition.arm;
        let m = world.pairs[pair].map;
        let (a, b) = shown(world, pair, swapped);
        let target = world.target_label(arm, m, a, b)?.ok_or(ServiceError::WrongStage(Stage::Practice2))?;
        let statistics = [world.taught(arm, m, a), world.taught(arm, m, b)];
        let explanation = self.explain(world, target, &statistics);
        let target = Label::from(target);
        Ok(Feedback::Practice { correct: choice == target, target, explanation, statistics })
    }

    fn explain(&self, world: &World, target: PreferenceLabel, s: &[TaughtStatistics; 2]) -> String {
        let Some(t) = world.content.templates(self.condition.arm) else {
            return String::new();
        };
        let value = |x: &TaughtStatistics| match self.condition.arm {
            Arm::Regret => x.biggest_possible_final_score.unwrap_or(x.score_so_far),
            _ => x.score_so_far,
        };
        let template = match target {
            PreferenceLabel::First => &t.first,
            PreferenceLabel::Second => &t.second,
            PreferenceLabel::Tie => &t.same,
        };
        fill(template, value(&s[0]), value(&s[1]))
    }

    pub fn apply_response(&mut self, input: ResponseInput, at_ms: u64) {
        let stage = self.stage();
        self.responses.push(RecordedResponse { item_id: input.item_id, stage, answer: input.answer, at_ms });
    }

    /// True unless some elicitation response strictly preferred a
    /// sheep-terminated segment over one that is not.
    pub fn attention_passed(&self, world: &World) -> bool {
        self.elicitation_choices(world).all(|(pair, swapped, choice)| {
            let (a, b) = shown(world, pair, swapped);
            let m = world.pairs[pair].map;
            let (chosen, other) = match choice {
                Label::First => (a, b),
                Label::Second => (b, a),
                _ => return true,
            };
            !(world.is_sheep_terminated(m, chosen) && !world.is_sheep_terminated(m, other))
        })
    }

    /// `(pair index, swapped, choice)` for every answered elicitation pair.
    pub fn elicitation_choices<'a>(&'a self, world: &'a World) -> impl Iterator<Item = (usize, bool, Label)> + 'a {
        self.responses.iter().filter(|r| r.stage == Stage::Elicitation).filter_map(move |r| {
            let Answer::Preference { choice } = r.answer else { return None };
            let a = self.assigned.iter().find(|a| a.pair_id == r.item_id)?;
            Some((world.pair_index(&a.pair_id)?, a.swapped, choice))
        })
    }

    pub fn check_survey(
        &self,
        world: &World,
        answers: &SurveyAnswers,
        threshold: f64,
        at_ms: u64,
    ) -> Result<SurveyOutcome, ServiceError> {
        match self.stage() {
            Stage::Survey => {}
            Stage::Done => return Err(ServiceError::SessionDone),
            other => return Err(ServiceError::WrongStage(other)),
        }
        let score = score_survey(self.condition, answers, threshold)?;
        let attention_passed = self.attention_passed(world);
        let kept = score.passed && attention_passed;
        Ok(SurveyOutcome { answers: answers.clone(), score, attention_passed, kept, at_ms })
    }

    pub fn apply_survey(&mut self, outcome: SurveyOutcome) {
        self.survey = Some(outcome);
    }

    pub fn next_item(&self, world: &World) -> Result<NextItem, ServiceError> {
        let position = self.responses.len() + usize::from(self.survey.is_some());
        let item = match self.current() {
            None => {
                let s = self.survey.as_ref().expect("no current item only after the survey");
                ItemPayload::Done {
                    kept: s.kept,
                    score: s.score.score,
                    max_score: s.score.max_score,
                    passed: s.score.passed,
                    attention_passed: s.attention_passed,
                }
            }
            Some(item) => self.payload(world, item)?,
        };
        Ok(NextItem {
            session_id: self.id,
            condition: self.condition,
            stage: self.stage(),
            position,
            total: self.plan.len(),
            item,
        })
    }

    fn payload(&self, world: &World, item: &PlannedItem) -> Result<ItemPayload, ServiceError> {
        let main = world.main_map();
        Ok(match &item.def {
            ItemDef::Page { content } => {
                let c = &world.content.items[*content];
                ItemPayload::Page {
                    item_id: item.id.clone(),
                    title: c.title.clone(),
                    body: c.body.clone(),
                    map: c.show_map.then(|| map_view(main)),
                    rewards: c.show_rewards.then(rewards_table),
                    example: if c.show_example { self.example(world)?.map(Box::new) } else { None },
                }
            }
            ItemDef::Exercise { statistic, k, content } => {
                let ex = &world.exercises[statistic][*k % world.exercises[statistic].len()];
                let map = &world.maps[ex.map].0;
                ItemPayload::Exercise {
                    item_id: item.id.clone(),
                    prompt: world.content.items[*content].prompt.clone(),
                    statistic: *statistic,
                    map: map_view(map),
                    segment: segment_view(map, &ex.segment),
                }
            }
            ItemDef::Pair { pair, swapped, question } => {
                let def = &world.pairs[*pair];
                let map = &world.maps[def.map].0;
                let (a, b) = shown(world, *pair, *swapped);
                let privileged =
                    self.condition.experiment == Experiment::Privileged && item.stage == Stage::Elicitation;
                let statistics = if privileged {
                    match (
                        world.privileged(self.condition.arm, def.map, a)?,
                        world.privileged(self.condition.arm, def.map, b)?,
                    ) {
                        (Some(x), Some(y)) => Some([x, y]),
                        _ => None,
                    }
                } else {
                    None
                };
                ItemPayload::Pair {
                    item_id: item.id.clone(),
                    pair_id: def.pair_id.clone(),
                    question,
                    map: map_view(map),
                    segments: [segment_view(map, a), segment_view(map, b)],
                    choices: CHOICES,
                    feedback: item.stage.gives_feedback(),
                    statistics,
                }
            }
            ItemDef::Survey => ItemPayload::Survey {
                questions: questions_for(self.condition.experiment)
                    .map(|q| QuestionView { id: q.id, text: q.text, multiple: q.multiple, choices: q.choices })
                    .collect(),
                likert: likert_for(self.condition)
                    .map(|q| LikertView { id: q.id, text: q.text, min: LIKERT_MIN, max: LIKERT_MAX })
                    .collect(),
            },
        })
    }

    fn example(&self, world: &World) -> Result<Option<ExampleView>, ServiceError> {
        let arm = self.condition.arm;
        let def = &world.pairs[world.example];
        let Some(target) = world.target_label(arm, def.map, &def.sigma1, &def.sigma2)? else {
            return Ok(None);
        };
        let map = &world.maps[def.map].0;
        let statistics = [world.taught(arm, def.map, &def.sigma1), world.taught(arm, def.map, &def.sigma2)];
        let explanation = self.explain(world, target, &statistics);
        Ok(Some(ExampleView {
            map: map_view(map),
            segments: [segment_view(map, &def.sigma1), segment_view(map, &def.sigma2)],
            statistics,
            preferred: target.into(),
            explanation,
        }))
    }
}
