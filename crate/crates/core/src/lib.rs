//! Reward learning from pairwise segment preferences on a tabular delivery
//! gridworld, under partial-return and regret preference models.

pub mod analysis;
pub mod dataset;
pub mod error;
pub mod learning;
pub mod maps;
pub mod mdp;
pub mod planner;
pub mod preference;

pub use error::{AnalysisError, DatasetError, MapError, MdpError, PlanError, PreferenceError, StatsError, TrainError};
pub use mdp::{Action, FeatureVector, GridMap, LinearReward, State};
