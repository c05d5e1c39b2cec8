//! Experimental conditions, the stage sequence each one walks through and
//! the question wording shown to annotators.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Ground-truth statistics are displayed next to every pair.
    Privileged,
    /// Annotators are taught a statistic before labeling.
    Trained,
    /// Only the elicitation question changes.
    Question,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Control,
    PartialReturn,
    Regret,
}

impl Experiment {
    pub const ALL: [Experiment; 3] = [Experiment::Privileged, Experiment::Trained, Experiment::Question];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Privileged => "privileged",
            Experiment::Trained => "trained",
            Experiment::Question => "question",
        }
    }
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::Control, Arm::PartialReturn, Arm::Regret];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Control => "control",
            Arm::PartialReturn => "partial_return",
            Arm::Regret => "regret",
        }
    }
}

/// The question asked during preference elicitation, by experiment and arm.
pub const PRIVILEGED_QUESTION: &str = "Which shows better behavior?";
pub const CONTROL_QUESTION: &str = "Which path do you prefer?";
pub const QUESTION_PARTIAL_RETURN: &str = "Which path has better immediate outcomes?";
pub const QUESTION_REGRET: &str = "Which path reflects better decision-making?";
pub const TRAINED_PARTIAL_RETURN: &str = "which path has the highest score so far?";
pub const TRAINED_REGRET: &str = "which path has the highest biggest possible final score";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Condition {
    pub experiment: Experiment,
    pub arm: Arm,
}

impl Condition {
    pub fn new(experiment: Experiment, arm: Arm) -> Self {
        Condition { experiment, arm }
    }

    /// All nine conditions, experiment-major.
    pub fn all() -> impl Iterator<Item = Condition> {
        Experiment::ALL.into_iter().flat_map(|e| Arm::ALL.into_iter().map(move |a| Condition::new(e, a)))
    }

    /// True for the arms that are taught a statistic and practice with feedback.
    pub fn is_trained_arm(self) -> bool {
        self.experiment == Experiment::Trained && self.arm != Arm::Control
    }

    pub fn elicitation_question(self) -> &'static str {
        match (self.experiment, self.arm) {
            (Experiment::Privileged, _) => PRIVILEGED_QUESTION,
            (_, Arm::Control) => CONTROL_QUESTION,
            (Experiment::Question, Arm::PartialReturn) => QUESTION_PARTIAL_RETURN,
            (Experiment::Question, Arm::Regret) => QUESTION_REGRET,
            (Experiment::Trained, Arm::PartialReturn) => TRAINED_PARTIAL_RETURN,
            (Experiment::Trained, Arm::Regret) => TRAINED_REGRET,
        }
    }

    pub fn stages(self) -> &'static [Stage] {
        if self.is_trained_arm() {
            &Stage::ALL
        } else {
            &[Stage::DomainTeaching, Stage::Elicitation, Stage::Survey, Stage::Done]
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.experiment.name(), self.arm.name())
    }
}

impl FromStr for Condition {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || ServiceError::UnknownCondition(s.to_string());
        let (e, a) = s.split_once('-').ok_or_else(unknown)?;
        let experiment = Experiment::ALL.into_iter().find(|x| x.name() == e).ok_or_else(unknown)?;
        let arm = Arm::ALL.into_iter().find(|x| x.name() == a).ok_or_else(unknown)?;
        Ok(Condition { experiment, arm })
    }
}

impl TryFrom<String> for Condition {
    type Error = ServiceError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Condition> for String {
    fn from(c: Condition) -> String {
        c.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    DomainTeaching,
    StatisticTeaching,
    #[serde(rename = "practice_1")]
    Practice1,
    InstructedExample,
    #[serde(rename = "practice_2")]
    Practice2,
    AntiGuidance,
    #[serde(rename = "practice_3")]
    Practice3,
    Elicitation,
    Survey,
    Done,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::DomainTeaching,
        Stage::StatisticTeaching,
        Stage::Practice1,
        Stage::InstructedExample,
        Stage::Practice2,
        Stage::AntiGuidance,
        Stage::Practice3,
        Stage::Elicitation,
        Stage::Survey,
        Stage::Done,
    ];

    /// Practice sets whose answers are graded against the taught model.
    pub fn gives_feedback(self) -> bool {
        matches!(self, Stage::Practice2 | Stage::Practice3)
    }

    pub fn is_practice(self) -> bool {
        matches!(self, Stage::Practice1 | Stage::Practice2 | Stage::Practice3)
    }
}
