//! A scripted annotator that reads payloads as JSON, rebuilds segments with
//! the core crate and answers like a noiseless follower of a preference model.

#![allow(dead_code)]

use prefbench_core::mdp::Action;
use prefbench_core::planner::{value_iteration, DEFAULT_GAMMA, DEFAULT_TOL};
use prefbench_core::preference::{noiseless_label, partial_return, ModelKind, PreferenceModelSpec, Segment, Values};
use prefbench_core::{GridMap, LinearReward, State};
use prefbench_service::survey::full_credit_answers;
use prefbench_service::{Condition, Experiment, ServiceConfig, SurveyAnswers};
use serde_json::{json, Value};

pub const GT: LinearReward = LinearReward::GROUND_TRUTH;

pub fn config() -> ServiceConfig {
    ServiceConfig::default()
}

pub fn map_of(item: &Value) -> GridMap {
    GridMap::parse(item["map"]["name"].as_str().unwrap(), item["map"]["text"].as_str().unwrap()).unwrap()
}

pub fn segment(map: &GridMap, view: &Value) -> Segment {
    let start: State = serde_json::from_value(view["start"].clone()).unwrap();
    let actions: Vec<Action> = serde_json::from_value(view["actions"].clone()).unwrap();
    Segment::from_actions(map, start, &actions).unwrap()
}

pub fn segments(item: &Value) -> (GridMap, Segment, Segment) {
    let map = map_of(item);
    let a = segment(&map, &item["segments"][0]);
    let b = segment(&map, &item["segments"][1]);
    (map, a, b)
}

/// The noiseless label of `model` on a pair payload, as a choice string.
pub fn model_choice(item: &Value, model: ModelKind) -> &'static str {
    let (map, a, b) = segments(item);
    let vt = value_iteration(&map, &GT, DEFAULT_GAMMA, DEFAULT_TOL).unwrap();
    let values = match model {
        ModelKind::PartialReturn => Values::None,
        ModelKind::Regret => Values::Exact(&vt),
    };
    match noiseless_label(&PreferenceModelSpec::noiseless(model), &a, &b, &GT, values).unwrap() {
        prefbench_core::preference::PreferenceLabel::First => "first",
        prefbench_core::preference::PreferenceLabel::Second => "second",
        prefbench_core::preference::PreferenceLabel::Tie => "same",
    }
}

pub fn exercise_value(item: &Value) -> f64 {
    let map = map_of(item);
    let s = segment(&map, &item["segment"]);
    let vt = value_iteration(&map, &GT, DEFAULT_GAMMA, DEFAULT_TOL).unwrap();
    match item["statistic"].as_str().unwrap() {
        "score_so_far" => partial_return(&s, &GT),
        "biggest_possible_score_increase" => vt.value(&s.end()),
        "biggest_possible_final_score" => partial_return(&s, &GT) + vt.value(&s.end()),
        other => panic!("unknown statistic {other}"),
    }
}

/// A response body for the current item, or `None` at the survey or the end.
pub fn respond(next: &Value, model: ModelKind) -> Option<Value> {
    let item = &next["item"];
    let id = item["item_id"].clone();
    match item["kind"].as_str().unwrap() {
        "page" => Some(json!({ "item_id": id, "kind": "ack" })),
        "exercise" => Some(json!({ "item_id": id, "kind": "value", "value": exercise_value(item) })),
        "pair" => Some(json!({ "item_id": id, "kind": "preference", "choice": model_choice(item, model) })),
        _ => None,
    }
}

pub fn survey(c: Condition) -> SurveyAnswers {
    let mut a = full_credit_answers(c.experiment);
    if c.is_trained_arm() {
        a.likert.insert("agreement".into(), 6);
        a.likert.insert("explanations_helpful".into(), 5);
    }
    a
}

/// The model a session of `c` is steered toward; controls answer by regret.
pub fn taught_model(c: Condition) -> ModelKind {
    match c.arm {
        prefbench_service::Arm::PartialReturn => ModelKind::PartialReturn,
        _ => ModelKind::Regret,
    }
}

pub fn is_privileged(c: Condition) -> bool {
    c.experiment == Experiment::Privileged
}
