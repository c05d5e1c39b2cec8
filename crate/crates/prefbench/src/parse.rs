//! Value parsers for command-line arguments.

use std::path::PathBuf;

use prefbench_core::mdp::NUM_FEATURES;
use prefbench_core::preference::ModelKind;
use prefbench_core::LinearReward;

pub fn model(s: &str) -> Result<ModelKind, String> {
    s.parse()
}

pub fn weights(s: &str) -> Result<LinearReward, String> {
    let values = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    let w: [f64; NUM_FEATURES] =
        values.try_into().map_err(|v: Vec<f64>| format!("expected {NUM_FEATURES} weights, got {}", v.len()))?;
    Ok(LinearReward(w))
}

pub fn named_path(s: &str) -> Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or_else(|| format!("expected name=path, got {s:?}"))?;
    if name.is_empty() {
        return Err(format!("empty dataset name in {s:?}"));
    }
    Ok((name.to_string(), PathBuf::from(path)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Seeds(pub Vec<u64>);

/// `1-10` (inclusive) or a comma-separated list.
pub fn seeds(s: &str) -> Result<Seeds, String> {
    let int = |v: &str| v.trim().parse::<u64>().map_err(|e| format!("{v:?}: {e}"));
    let seeds = match s.split_once('-') {
        Some((a, b)) => {
            let (a, b) = (int(a)?, int(b)?);
            if a > b {
                return Err(format!("empty seed range {s:?}"));
            }
            (a..=b).collect()
        }
        None => s.split(',').map(int).collect::<Result<Vec<_>, _>>()?,
    };
    if seeds.is_empty() {
        return Err("no seeds".into());
    }
    Ok(Seeds(seeds))
}
