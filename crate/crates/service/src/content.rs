//! Editable teaching content. The built-in copy lives in `content/` and can be
//! replaced wholesale by a `teaching.toml` in the configured content directory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::condition::{Arm, Condition, Experiment, Stage};
use crate::error::ServiceError;

pub const BUILTIN_TEACHING: &str = include_str!("../content/teaching.toml");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    ScoreSoFar,
    BiggestPossibleScoreIncrease,
    BiggestPossibleFinalScore,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    #[default]
    Page,
    Exercise,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContentItem {
    pub stage: Stage,
    pub id: String,
    #[serde(default)]
    pub kind: ItemKind,
    #[serde(default)]
    pub experiments: Option<Vec<Experiment>>,
    #[serde(default)]
    pub arms: Option<Vec<Arm>>,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub body: String,
    #[serde(default)]
    pub show_map: bool,
    #[serde(default)]
    pub show_rewards: bool,
    #[serde(default)]
    pub show_example: bool,
    #[serde(default)]
    pub statistic: Option<Statistic>,
    #[serde(default)]
    pub count: usize,
    #[serde(default)]
    pub prompt: String,
}

impl ContentItem {
    pub fn applies_to(&self, c: Condition) -> bool {
        self.experiments.as_ref().is_none_or(|e| e.contains(&c.experiment))
            && self.arms.as_ref().is_none_or(|a| a.contains(&c.arm))
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackTemplates {
    pub first: String,
    pub second: String,
    pub same: String,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Feedback {
    pub partial_return: FeedbackTemplates,
    pub regret: FeedbackTemplates,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Content {
    pub items: Vec<ContentItem>,
    pub feedback: Feedback,
}

impl Content {
    pub fn builtin() -> Content {
        Content::parse(BUILTIN_TEACHING).expect("built-in content is valid")
    }

    pub fn parse(text: &str) -> Result<Content, ServiceError> {
        let c: Content = toml::from_str(text).map_err(|e| ServiceError::Content(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// `teaching.toml` from `dir`, or the built-in content when absent.
    pub fn load(dir: Option<&Path>) -> Result<Content, ServiceError> {
        match dir {
            None => Ok(Content::builtin()),
            Some(dir) => {
                let path = dir.join("teaching.toml");
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| ServiceError::Content(format!("{}: {e}", path.display())))?;
                Content::parse(&text)
            }
        }
    }

    fn validate(&self) -> Result<(), ServiceError> {
        let bad = |m: String| Err(ServiceError::Content(m));
        let mut seen = std::collections::HashSet::new();
        for item in &self.items {
            if !seen.insert(item.id.as_str()) {
                return bad(format!("duplicate item id {:?}", item.id));
            }
            if item.stage.is_practice() || matches!(item.stage, Stage::Elicitation | Stage::Survey | Stage::Done) {
                return bad(format!("{}: stage {:?} takes no content", item.id, item.stage));
            }
            if item.kind == ItemKind::Exercise && (item.statistic.is_none() || item.count == 0) {
                return bad(format!("{}: exercises need a statistic and a count", item.id));
            }
        }
        Ok(())
    }

    /// Items of `stage` shown to `c`, in file order.
    pub fn items_for(&self, c: Condition, stage: Stage) -> impl Iterator<Item = &ContentItem> {
        self.items.iter().filter(move |i| i.stage == stage && i.applies_to(c))
    }

    pub fn templates(&self, arm: Arm) -> Option<&FeedbackTemplates> {
        match arm {
            Arm::PartialReturn => Some(&self.feedback.partial_return),
            Arm::Regret => Some(&self.feedback.regret),
            Arm::Control => None,
        }
    }
}

pub fn fill(template: &str, first: f64, second: f64) -> String {
    template.replace("{first}", &format_number(first)).replace("{second}", &format_number(second))
}

/// Two decimals, without a trailing ".00" or a negative zero.
pub fn format_number(x: f64) -> String {
    let rounded = (x * 100.0).round() / 100.0;
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    if rounded.fract() == 0.0 {
        format!("{rounded:.0}")
    } else {
        format!("{rounded:.2}")
    }
}
