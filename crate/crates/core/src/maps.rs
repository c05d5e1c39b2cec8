//! Example maps shipped with the crate.

use crate::mdp::GridMap;

pub const DELIVERY: &str = include_str!("../maps/delivery.map");
pub const TEACH_COINS: &str = include_str!("../maps/teach_coins.map");
pub const TEACH_BRICK: &str = include_str!("../maps/teach_brick.map");

/// Every shipped map as `(name, text)`.
pub const ALL: [(&str, &str); 3] = [("delivery", DELIVERY), ("teach_coins", TEACH_COINS), ("teach_brick", TEACH_BRICK)];

/// The default 10x10 delivery map.
pub fn delivery() -> GridMap {
    GridMap::parse("delivery", DELIVERY).expect("shipped map parses")
}

pub fn teach_coins() -> GridMap {
    GridMap::parse("teach_coins", TEACH_COINS).expect("shipped map parses")
}

pub fn teach_brick() -> GridMap {
    GridMap::parse("teach_brick", TEACH_BRICK).expect("shipped map parses")
}

/// Looks up a shipped map by name.
pub fn by_name(name: &str) -> Option<GridMap> {
    ALL.iter().find(|(n, _)| *n == name).map(|(n, text)| GridMap::parse(n, text).expect("shipped map parses"))
}
