//! The task-comprehension survey and its scoring.
//!
//! Every question lists the answer sets that earn full credit and those that
//! earn half credit. A selection scores only if it equals one of those sets
//! exactly, so adding a wrong answer to a correct one forfeits the item.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::condition::{Arm, Condition, Experiment};
use crate::error::ServiceError;

use Experiment::{Privileged, Question, Trained};

#[derive(Debug)]
pub struct SurveyQuestion {
    pub id: &'static str,
    pub text: &'static str,
    /// Check-all-that-apply rather than a single choice.
    pub multiple: bool,
    pub choices: &'static [&'static str],
    pub full: &'static [&'static [&'static str]],
    pub partial: &'static [&'static [&'static str]],
    pub experiments: &'static [Experiment],
}

const ALL_EXPERIMENTS: &[Experiment] = &[Privileged, Trained, Question];

pub const QUESTIONS: [SurveyQuestion; 8] = [
    SurveyQuestion {
        id: "goal",
        text: "What is the goal of this world? (Check all that apply.)",
        multiple: true,
        choices: &[
            "To maximize profit",
            "To get to a specific location.",
            "To drive as far as possible to explore the world.",
            "To collect as many coins as possible.",
            "To collect as many sheep as possible.",
            "To drive sheep to a specific location.",
        ],
        full: &[&["To maximize profit"]],
        partial: &[&["To get to a specific location.", "To maximize profit"]],
        experiments: ALL_EXPERIMENTS,
    },
    SurveyQuestion {
        id: "house",
        text: "What happens when you run into a house?",
        multiple: false,
        choices: &[
            "You incur a gas cost and don't go anywhere.",
            "You incur a gas cost and a cost for hitting the house, and you don't go anywhere.",
            "You incur a gas cost and a cost for hitting the house, and you drive over the house.",
            "Nothing happens.",
            "The episode ends.",
            "You get stuck.",
            "To collect as many sheep as possible.",
        ],
        full: &[&["You incur a gas cost and don't go anywhere."]],
        partial: &[
            &["You incur a gas cost and a cost for hitting the house, and you don't go anywhere."],
            &["You incur a gas cost and a cost for hitting the house, and you drive over the house."],
            &["Nothing happens."],
        ],
        experiments: &[Trained, Question],
    },
    SurveyQuestion {
        id: "house_privileged",
        text: "What happens when you run into a house? (Check all that apply.)",
        multiple: true,
        choices: &[
            "You pay a gas penalty.",
            "You can't run into a house; the world doesn't let you move into it.",
            "The episode ends.",
            "You get stuck.",
            "To collect as many sheep as possible.",
        ],
        full: &[&["You pay a gas penalty.", "You can't run into a house; the world doesn't let you move into it."]],
        partial: &[
            &["You pay a gas penalty."],
            &["You can't run into a house; the world doesn't let you move into it."],
        ],
        experiments: &[Privileged],
    },
    SurveyQuestion {
        id: "sheep",
        text: "What happens when you run into a sheep? (Check all that apply.)",
        multiple: true,
        choices: &[
            "The episode ends.",
            "You are penalized for running into a sheep.",
            "You are rewarded for collecting a sheep.",
        ],
        full: &[&["The episode ends.", "You are penalized for running into a sheep."]],
        partial: &[&["The episode ends."], &["You are penalized for running into a sheep."]],
        experiments: ALL_EXPERIMENTS,
    },
    SurveyQuestion {
        id: "roadblock",
        text: "What happens when you run into a roadblock? (Check all that apply.)",
        multiple: true,
        choices: &[
            "You pay a penalty.",
            "The episode ends.",
            "You get stuck.",
            "You can't run into a roadblock; the world doesn't let you move into it.",
        ],
        full: &[&["You pay a penalty."]],
        partial: &[],
        experiments: ALL_EXPERIMENTS,
    },
    SurveyQuestion {
        id: "roadblock_good",
        text: "Is running into a roadblock ever a good choice in any town?",
        multiple: false,
        choices: &["Yes, in certain circumstances.", "No."],
        full: &[&["Yes, in certain circumstances."]],
        partial: &[],
        experiments: ALL_EXPERIMENTS,
    },
    SurveyQuestion {
        id: "brick",
        text: "What happens when you go into the brick area? (Check all that apply.)",
        multiple: true,
        choices: &[
            "You pay extra for gas.",
            "The episode ends.",
            "You get stuck in the brick area.",
            "You can't go into the brick area; the world doesn't let you move into it.",
        ],
        full: &[&["You pay extra for gas."]],
        partial: &[],
        experiments: &[Privileged],
    },
    SurveyQuestion {
        id: "brick_good",
        text: "Is entering the brick area ever a good choice?",
        multiple: false,
        choices: &["Yes, in certain circumstances", "No"],
        full: &[&["Yes, in certain circumstances"]],
        partial: &[],
        experiments: ALL_EXPERIMENTS,
    },
];

/// A 1 to 7 agreement item, recorded but not scored.
#[derive(Debug)]
pub struct LikertQuestion {
    pub id: &'static str,
    pub text: &'static str,
    pub arms: &'static [Arm],
}

pub const LIKERT_MIN: u8 = 1;
pub const LIKERT_MAX: u8 = 7;

pub const LIKERT: [LikertQuestion; 3] = [
    LikertQuestion {
        id: "agreement",
        text: "We told you that the better path is always the one with the higher SCORE SO FAR. How often did you agree with this?",
        arms: &[Arm::PartialReturn],
    },
    LikertQuestion {
        id: "agreement",
        text: "We told you that the better path is always the one with the higher BIGGEST POSSIBLE FINAL SCORE. How often did you agree with this?",
        arms: &[Arm::Regret],
    },
    LikertQuestion {
        id: "explanations_helpful",
        text: "How helpful were our explanations on why one path was better than another path for your own decision making?",
        arms: &[Arm::PartialReturn, Arm::Regret],
    },
];

pub fn questions_for(e: Experiment) -> impl Iterator<Item = &'static SurveyQuestion> {
    QUESTIONS.iter().filter(move |q| q.experiments.contains(&e))
}

pub fn likert_for(c: Condition) -> impl Iterator<Item = &'static LikertQuestion> {
    LIKERT.iter().filter(move |q| c.is_trained_arm() && q.arms.contains(&c.arm))
}

/// One point per question.
pub fn max_score(e: Experiment) -> f64 {
    questions_for(e).count() as f64
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyAnswers {
    /// Selected answer texts per question id. Unanswered questions score 0.
    #[serde(default)]
    pub answers: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub likert: BTreeMap<String, u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurveyScore {
    pub score: f64,
    pub max_score: f64,
    pub threshold: f64,
    pub passed: bool,
    pub per_question: BTreeMap<String, f64>,
}

fn credit(q: &SurveyQuestion, selected: &BTreeSet<&str>) -> f64 {
    let matches = |sets: &[&[&str]]| sets.iter().any(|set| set.iter().copied().collect::<BTreeSet<_>>() == *selected);
    if matches(q.full) {
        1.0
    } else if matches(q.partial) {
        0.5
    } else {
        0.0
    }
}

/// Scores `a` for a session in condition `c`; passes iff score >= threshold.
pub fn score_survey(c: Condition, a: &SurveyAnswers, threshold: f64) -> Result<SurveyScore, ServiceError> {
    let questions: Vec<&SurveyQuestion> = questions_for(c.experiment).collect();
    for id in a.answers.keys() {
        if !questions.iter().any(|q| q.id == id) {
            return Err(ServiceError::UnknownQuestion(id.clone()));
        }
    }
    let likert: Vec<&LikertQuestion> = likert_for(c).collect();
    for (id, v) in &a.likert {
        if !likert.iter().any(|q| q.id == id) {
            return Err(ServiceError::UnknownQuestion(id.clone()));
        }
        if !(LIKERT_MIN..=LIKERT_MAX).contains(v) {
            return Err(ServiceError::InvalidResponse(format!("{id}: {v} is outside {LIKERT_MIN}..={LIKERT_MAX}")));
        }
    }
    let mut per_question = BTreeMap::new();
    for q in &questions {
        let selected: BTreeSet<&str> = a.answers.get(q.id).into_iter().flatten().map(String::as_str).collect();
        if let Some(bad) = selected.iter().find(|s| !q.choices.contains(s)) {
            return Err(ServiceError::InvalidResponse(format!("{}: {bad:?} is not a choice", q.id)));
        }
        if !q.multiple && selected.len() > 1 {
            return Err(ServiceError::InvalidResponse(format!("{} takes a single answer", q.id)));
        }
        per_question.insert(q.id.to_string(), credit(q, &selected));
    }
    let score = per_question.values().sum::<f64>();
    Ok(SurveyScore { score, max_score: max_score(c.experiment), threshold, passed: score >= threshold, per_question })
}

/// Answers earning full credit on every question of `e`.
pub fn full_credit_answers(e: Experiment) -> SurveyAnswers {
    SurveyAnswers {
        answers: questions_for(e)
            .map(|q| (q.id.to_string(), q.full[0].iter().map(|s| s.to_string()).collect()))
            .collect(),
        likert: BTreeMap::new(),
    }
}
