//! Service configuration, read from a single TOML file.
//!
//! ```toml
//! bind = "127.0.0.1:8080"
//! map = "delivery"             # shipped map name or a path to a map file
//! seed = 7
//! store = "sessions.jsonl"     # omit for an in-memory store
//! conditions = ["trained-regret", "trained-control"]
//!
//! [trained]
//! pairs_per_session = 50
//! pass_threshold = 3.5
//!
//! [pool]
//! random_pairs = 428
//! terminal_pairs = 72
//! ```

use std::path::{Path, PathBuf};

use prefbench_core::maps;
use prefbench_core::GridMap;
use serde::{Deserialize, Serialize};

use crate::condition::{Condition, Experiment};
use crate::error::ServiceError;

/// Allowed elicitation lengths under the privileged protocol.
pub const PRIVILEGED_PAIR_RANGE: std::ops::RangeInclusive<usize> = 35..=50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Elicitation pairs per session, the attention pair included.
    pub pairs_per_session: usize,
    /// Minimum survey score for a session to be kept.
    pub pass_threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoolConfig {
    pub random_pairs: usize,
    pub terminal_pairs: usize,
    /// Give the two segments of a random pair different start states.
    pub distinct_starts: bool,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig { random_pairs: 428, terminal_pairs: 72, distinct_starts: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceConfig {
    pub bind: String,
    pub map: String,
    /// Maps used for teaching exercises and practice pairs.
    pub practice_maps: Vec<String>,
    pub seed: u64,
    pub store: Option<PathBuf>,
    /// Directory overriding the built-in teaching and survey content.
    pub content_dir: Option<PathBuf>,
    pub conditions: Vec<Condition>,
    /// Export "same" responses as half/half labels by default.
    pub include_same: bool,
    pub privileged: ExperimentConfig,
    pub trained: ExperimentConfig,
    pub question: ExperimentConfig,
    /// Pairs shared by the trained and question experiments.
    pub pool: PoolConfig,
    pub privileged_pool: PoolConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1:8080".into(),
            map: "delivery".into(),
            practice_maps: vec!["teach_coins".into(), "teach_brick".into()],
            seed: 0,
            store: None,
            content_dir: None,
            conditions: Condition::all().collect(),
            include_same: false,
            privileged: ExperimentConfig { pairs_per_session: 50, pass_threshold: 4.5 },
            trained: ExperimentConfig { pairs_per_session: 50, pass_threshold: 3.5 },
            question: ExperimentConfig { pairs_per_session: 50, pass_threshold: 3.5 },
            pool: PoolConfig::default(),
            privileged_pool: PoolConfig::default(),
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig { pairs_per_session: 50, pass_threshold: 3.5 }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        let cfg: ServiceConfig = toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ServiceError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn experiment(&self, e: Experiment) -> &ExperimentConfig {
        match e {
            Experiment::Privileged => &self.privileged,
            Experiment::Trained => &self.trained,
            Experiment::Question => &self.question,
        }
    }

    pub fn pool_for(&self, e: Experiment) -> &PoolConfig {
        match e {
            Experiment::Privileged => &self.privileged_pool,
            Experiment::Trained | Experiment::Question => &self.pool,
        }
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        let bad = |m: String| Err(ServiceError::Config(m));
        if self.conditions.is_empty() {
            return bad("no conditions enabled".into());
        }
        if self.practice_maps.is_empty() {
            return bad("practice_maps is empty".into());
        }
        for e in Experiment::ALL {
            let x = self.experiment(e);
            if x.pairs_per_session < 2 {
                return bad(format!("{}: pairs_per_session must be at least 2", e.name()));
            }
            if e == Experiment::Privileged && !PRIVILEGED_PAIR_RANGE.contains(&x.pairs_per_session) {
                return bad(format!("privileged: pairs_per_session must be within {PRIVILEGED_PAIR_RANGE:?}"));
            }
            if !x.pass_threshold.is_finite() || x.pass_threshold < 0.0 {
                return bad(format!("{}: pass_threshold must be a non-negative number", e.name()));
            }
            let pool = self.pool_for(e);
            if pool.random_pairs + pool.terminal_pairs < x.pairs_per_session - 1 {
                return bad(format!("{}: the pool cannot fill a single session", e.name()));
            }
        }
        Ok(())
    }
}

/// A shipped map by name, or a map file. File maps are named after their stem.
pub fn load_map(spec: &str) -> Result<GridMap, ServiceError> {
    if let Some(map) = maps::by_name(spec) {
        return Ok(map);
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("map {spec}: {e}")))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("map");
    GridMap::parse(name, &text).map_err(|e| ServiceError::Config(format!("map {spec}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_parse_from_empty_toml() {
        let cfg = ServiceConfig::from_toml("").unwrap();
        assert_eq!(cfg, ServiceConfig::default());
        assert_eq!(cfg.privileged.pass_threshold, 4.5);
        assert_eq!(cfg.trained.pass_threshold, 3.5);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ServiceConfig::from_toml("[privileged]\npairs_per_session = 20\n").is_err());
        assert!(ServiceConfig::from_toml("conditions = []\n").is_err());
        assert!(ServiceConfig::from_toml("conditions = [\"trained-nobody\"]\n").is_err());
        assert!(ServiceConfig::from_toml("colour = 1\n").is_err());
        let cfg = ServiceConfig::from_toml("conditions = [\"question-regret\"]\n[question]\npairs_per_session = 10\n")
            .unwrap();
        assert_eq!(cfg.question.pairs_per_session, 10);
    }
}
