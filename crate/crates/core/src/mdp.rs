//! The delivery gridworld: map representation, deterministic dynamics and
//! the component-decomposed linear reward.
//!
//! A map is a rectangular grid of cells. Each cell is a road surface (white
//! or brick, optionally carrying a coin or a roadblock), an impassable house,
//! or a terminal (goal or sheep). The agent's state is its location.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{MapError, MdpError};

/// Number of reward components.
pub const NUM_FEATURES: usize = 6;

/// Component names, in feature order.
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = ["white_move", "brick_move", "coin", "roadblock", "goal", "sheep"];

pub const WHITE: usize = 0;
pub const BRICK: usize = 1;
pub const COIN: usize = 2;
pub const ROADBLOCK: usize = 3;
pub const GOAL: usize = 4;
pub const SHEEP: usize = 5;

/// Per-component counts for one transition, or summed over a segment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureVector(pub [u32; NUM_FEATURES]);

impl FeatureVector {
    pub fn unit(component: usize) -> Self {
        let mut v = [0; NUM_FEATURES];
        v[component] = 1;
        FeatureVector(v)
    }

    pub fn as_f64(&self) -> [f64; NUM_FEATURES] {
        self.0.map(f64::from)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }
}

impl Add for FeatureVector {
    type Output = FeatureVector;

    fn add(mut self, rhs: FeatureVector) -> FeatureVector {
        self += rhs;
        self
    }
}

impl AddAssign for FeatureVector {
    fn add_assign(&mut self, rhs: FeatureVector) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
    }
}

impl std::iter::Sum for FeatureVector {
    fn sum<I: Iterator<Item = FeatureVector>>(iter: I) -> Self {
        iter.fold(FeatureVector::default(), |acc, v| acc + v)
    }
}

/// Linear reward over transition features. Holds both the ground truth and
/// learned approximations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearReward(pub [f64; NUM_FEATURES]);

impl LinearReward {
    /// (-1 white, -2 brick, +1 coin, -1 roadblock, +50 goal, -50 sheep).
    pub const GROUND_TRUTH: LinearReward = LinearReward([-1.0, -2.0, 1.0, -1.0, 50.0, -50.0]);

    pub fn ground_truth() -> Self {
        Self::GROUND_TRUTH
    }

    pub fn zero() -> Self {
        LinearReward([0.0; NUM_FEATURES])
    }

    pub fn reward(&self, phi: &FeatureVector) -> f64 {
        self.dot(&phi.as_f64())
    }

    pub fn dot(&self, v: &[f64; NUM_FEATURES]) -> f64 {
        self.0.iter().zip(v).map(|(w, x)| w * x).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        LinearReward(self.0.map(|w| w * c))
    }

    pub fn weights(&self) -> &[f64; NUM_FEATURES] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|w| w.is_finite())
    }
}

/// Dot product of weights and feature counts.
pub fn reward(w: &LinearReward, phi: &FeatureVector) -> f64 {
    w.reward(phi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surface {
    White,
    Brick,
    House,
    Goal,
    Sheep,
}

impl Surface {
    pub fn is_terminal(self) -> bool {
        matches!(self, Surface::Goal | Surface::Sheep)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Object {
    #[default]
    None,
    Coin,
    Roadblock,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Cell {
    pub surface: Surface,
    pub object: Object,
}

impl Cell {
    fn from_glyph(glyph: char) -> Option<Cell> {
        let (surface, object) = match glyph {
            '.' | 'S' => (Surface::White, Object::None),
            '#' => (Surface::Brick, Object::None),
            'H' => (Surface::House, Object::None),
            'G' => (Surface::Goal, Object::None),
            'X' => (Surface::Sheep, Object::None),
            'c' => (Surface::White, Object::Coin),
            'b' => (Surface::Brick, Object::Coin),
            'r' => (Surface::White, Object::Roadblock),
            'q' => (Surface::Brick, Object::Roadblock),
            _ => return None,
        };
        Some(Cell { surface, object })
    }

    fn glyph(&self) -> char {
        match (self.surface, self.object) {
            (Surface::White, Object::None) => '.',
            (Surface::White, Object::Coin) => 'c',
            (Surface::White, Object::Roadblock) => 'r',
            (Surface::Brick, Object::None) => '#',
            (Surface::Brick, Object::Coin) => 'b',
            (Surface::Brick, Object::Roadblock) => 'q',
            (Surface::House, _) => 'H',
            (Surface::Goal, _) => 'G',
            (Surface::Sheep, _) => 'X',
        }
    }

    /// Surface component paid for moving onto (or bumping inside) this cell.
    fn surface_feature(&self) -> FeatureVector {
        match self.surface {
            Surface::White => FeatureVector::unit(WHITE),
            Surface::Brick => FeatureVector::unit(BRICK),
            Surface::Goal => FeatureVector::unit(GOAL),
            Surface::Sheep => FeatureVector::unit(SHEEP),
            Surface::House => FeatureVector::default(),
        }
    }

    fn entry_features(&self) -> FeatureVector {
        if self.surface.is_terminal() {
            return self.surface_feature();
        }
        let mut phi = self.surface_feature();
        match self.object {
            Object::Coin => phi += FeatureVector::unit(COIN),
            Object::Roadblock => phi += FeatureVector::unit(ROADBLOCK),
            Object::None => {}
        }
        phi
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State {
    pub x: usize,
    pub y: usize,
    pub terminal: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transition {
    pub next: State,
    pub phi: FeatureVector,
    pub terminal: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridMap {
    name: String,
    width: usize,
    height: usize,
    cells: Vec<Cell>,
}

impl GridMap {
    /// Parses the one-glyph-per-cell text format.
    pub fn parse(name: &str, text: &str) -> Result<GridMap, MapError> {
        let rows: Vec<&str> =
            text.strip_suffix('\n').unwrap_or(text).split('\n').map(|r| r.strip_suffix('\r').unwrap_or(r)).collect();
        if rows.is_empty() || rows.iter().all(|r| r.is_empty()) {
            return Err(MapError::Empty);
        }
        let width = rows[0].chars().count();
        let mut cells = Vec::with_capacity(width * rows.len());
        for (row, line) in rows.iter().enumerate() {
            let found = line.chars().count();
            if found != width {
                return Err(MapError::Ragged { row, expected: width, found });
            }
            for (col, glyph) in line.chars().enumerate() {
                let cell = Cell::from_glyph(glyph).ok_or(MapError::UnknownGlyph { row, col, glyph })?;
                cells.push(cell);
            }
        }
        let map = GridMap { name: name.to_string(), width, height: rows.len(), cells };
        if !map.cells.iter().any(|c| c.surface == Surface::Goal) {
            return Err(MapError::NoGoal);
        }
        if !map.cells.iter().any(|c| matches!(c.surface, Surface::White | Surface::Brick)) {
            return Err(MapError::NoNonTerminal);
        }
        Ok(map)
    }

    /// Canonical text: one row per line, trailing newline.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(self.cell(x, y).glyph());
            }
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the canonical text, hex encoded. Names are not part of it.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, x: usize, y: usize) -> Cell {
        self.cells[y * self.width + x]
    }

    pub fn cell_at_index(&self, index: usize) -> Cell {
        self.cells[index]
    }

    pub fn index(&self, s: &State) -> usize {
        s.y * self.width + s.x
    }

    pub fn in_bounds(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height
    }

    /// The state at a cell, or `None` for houses and out-of-bounds positions.
    pub fn state_at(&self, x: usize, y: usize) -> Option<State> {
        if !self.in_bounds(x, y) {
            return None;
        }
        let cell = self.cell(x, y);
        if cell.surface == Surface::House {
            return None;
        }
        Some(State { x, y, terminal: cell.surface.is_terminal() })
    }

    pub fn state_at_index(&self, index: usize) -> Option<State> {
        self.state_at(index % self.width, index / self.width)
    }

    /// All states (every non-house cell), in row-major order.
    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        (0..self.cells.len()).filter_map(move |i| self.state_at_index(i))
    }

    pub fn is_valid_state(&self, s: &State) -> bool {
        self.state_at(s.x, s.y) == Some(*s)
    }

    /// Deterministic transition. Bumping into a house or the boundary leaves
    /// the agent in place and pays only the current surface component.
    pub fn step(&self, s: &State, a: Action) -> Result<Transition, MdpError> {
        if !self.is_valid_state(s) {
            return Err(MdpError::InvalidState { x: s.x, y: s.y });
        }
        if s.terminal {
            return Err(MdpError::TerminalStep { x: s.x, y: s.y });
        }
        let (dx, dy) = a.delta();
        let target = s.x.checked_add_signed(dx).zip(s.y.checked_add_signed(dy)).and_then(|(x, y)| self.state_at(x, y));
        Ok(match target {
            None => Transition { next: *s, phi: self.cell(s.x, s.y).surface_feature(), terminal: false },
            Some(next) => Transition { next, phi: self.cell(next.x, next.y).entry_features(), terminal: next.terminal },
        })
    }

    /// Uniform start distribution over non-terminal, non-house cells.
    pub fn start_distribution(&self) -> Vec<(State, f64)> {
        let support: Vec<State> = self.states().filter(|s| !s.terminal).collect();
        let weight = 1.0 / support.len() as f64;
        support.into_iter().map(|s| (s, weight)).collect()
    }

    pub fn start_states(&self) -> Vec<State> {
        self.states().filter(|s| !s.terminal).collect()
    }

    /// Precomputed transition table indexed by cell, for the planners.
    pub fn dynamics(&self) -> Dynamics {
        let mut edges = Vec::with_capacity(self.cells.len());
        let mut terminal = vec![false; self.cells.len()];
        for index in 0..self.cells.len() {
            match self.state_at_index(index) {
                Some(s) if !s.terminal => {
                    let row = Action::ALL.map(|a| {
                        let t = self.step(&s, a).expect("non-terminal state");
                        Edge { next: self.index(&t.next), phi: t.phi }
                    });
                    edges.push(Some(row));
                }
                Some(_) => {
                    terminal[index] = true;
                    edges.push(None);
                }
                None => edges.push(None),
            }
        }
        Dynamics { edges, terminal }
    }

    /// Shortest action count from `s` to any terminal, by breadth-first search.
    pub fn steps_to_terminal(&self, s: &State) -> Option<usize> {
        let dynamics = self.dynamics();
        let mut dist = vec![usize::MAX; self.cells.len()];
        let mut queue = std::collections::VecDeque::new();
        let start = self.index(s);
        dist[start] = 0;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            if dynamics.terminal[i] {
                return Some(dist[i]);
            }
            if let Some(row) = &dynamics.edges[i] {
                for e in row {
                    if dist[e.next] == usize::MAX {
                        dist[e.next] = dist[i] + 1;
                        queue.push_back(e.next);
                    }
                }
            }
        }
        None
    }
}

impl fmt::Display for GridMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub next: usize,
    pub phi: FeatureVector,
}

/// Cell-indexed transition table. `edges[i]` is `None` for houses and
/// terminals.
#[derive(Clone, Debug)]
pub struct Dynamics {
    pub edges: Vec<Option<[Edge; 4]>>,
    pub terminal: Vec<bool>,
}

impl Dynamics {
    pub fn num_cells(&self) -> usize {
        self.edges.len()
    }
}

/// Difference of two feature vectors as reals.
pub fn feature_diff(a: &FeatureVector, b: &FeatureVector) -> [f64; NUM_FEATURES] {
    let (a, b) = (a.as_f64(), b.as_f64());
    std::array::from_fn(|i| a[i] - b[i])
}

impl Sub for FeatureVector {
    type Output = [f64; NUM_FEATURES];

    fn sub(self, rhs: FeatureVector) -> [f64; NUM_FEATURES] {
        feature_diff(&self, &rhs)
    }
}
