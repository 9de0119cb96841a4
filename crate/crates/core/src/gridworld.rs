//! King-move grid worlds with a distance feature, coloured feature regions,
//! and planted ground-truth constraints.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::{
    false_positive_rate, greedy_iterative_inference, InferenceConfig, InferenceError, InferenceResult,
};
use crate::maxent::{backward_pass, sample_trajectories, DemoSet, SolverError};
use crate::mdp::{
    apply_constraints, stochastic_observation_model, ConstraintSet, GridLayout, Mdp, MdpBuilder, MdpError,
    MinimalConstraint, Successor, Trajectory, Violation,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("invalid grid config: {0}")]
    InvalidConfig(String),
    #[error("cannot parse grid config: {0}")]
    Parse(String),
    #[error("unknown shipped config {0:?}")]
    UnknownConfig(String),
    #[error("trajectory {index}: {violation}")]
    InfeasibleDemo { index: usize, violation: Violation },
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

/// The eight king moves followed by the goal's self-loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Move {
    Right,
    UpRight,
    Up,
    UpLeft,
    Left,
    DownLeft,
    Down,
    DownRight,
    Stay,
}

impl Move {
    pub const ALL: [Move; 9] = [
        Move::Right,
        Move::UpRight,
        Move::Up,
        Move::UpLeft,
        Move::Left,
        Move::DownLeft,
        Move::Down,
        Move::DownRight,
        Move::Stay,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Move> {
        Move::ALL.get(i).copied()
    }

    pub fn delta(self) -> (i64, i64) {
        match self {
            Move::Right => (1, 0),
            Move::UpRight => (1, 1),
            Move::Up => (0, 1),
            Move::UpLeft => (-1, 1),
            Move::Left => (-1, 0),
            Move::DownLeft => (-1, -1),
            Move::Down => (0, -1),
            Move::DownRight => (1, -1),
            Move::Stay => (0, 0),
        }
    }

    pub fn from_delta(dx: i64, dy: i64) -> Option<Move> {
        Move::ALL.into_iter().find(|m| m.delta() == (dx, dy))
    }

    pub fn is_diagonal(self) -> bool {
        let (dx, dy) = self.delta();
        dx != 0 && dy != 0
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Move::Right => "right",
            Move::UpRight => "up_right",
            Move::Up => "up",
            Move::UpLeft => "up_left",
            Move::Left => "left",
            Move::DownLeft => "down_left",
            Move::Down => "down",
            Move::DownRight => "down_right",
            Move::Stay => "stay",
        }
    }

    /// The two moves 45° either side; `Stay` has none.
    fn neighbours(self) -> [Move; 2] {
        let i = self.index();
        [Move::ALL[(i + 1) % 8], Move::ALL[(i + 7) % 8]]
    }
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Move {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Move::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| GridError::InvalidConfig(format!("unknown move {s:?}")))
    }
}

/// Expands explicit cells and inclusive rectangles `[x0, y0, x1, y1]`.
fn expand_region(
    cells: &[[usize; 2]],
    rects: &[[usize; 4]],
    width: usize,
    height: usize,
) -> Result<BTreeSet<(usize, usize)>, GridError> {
    let mut out = BTreeSet::new();
    let check = |x: usize, y: usize| {
        if x < width && y < height {
            Ok((x, y))
        } else {
            Err(GridError::InvalidConfig(format!("cell ({x}, {y}) outside {width}x{height} grid")))
        }
    };
    for &[x, y] in cells {
        out.insert(check(x, y)?);
    }
    for &[x0, y0, x1, y1] in rects {
        if x0 > x1 || y0 > y1 {
            return Err(GridError::InvalidConfig(format!("empty rectangle [{x0}, {y0}, {x1}, {y1}]")));
        }
        for x in x0..=x1 {
            for y in y0..=y1 {
                out.insert(check(x, y)?);
            }
        }
    }
    Ok(out)
}

/// A coloured feature produced by taking `actions` (default: every move)
/// from the given cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColourFeature {
    pub name: String,
    #[serde(default)]
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cells: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rects: Vec<[usize; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<Move>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedConstraints {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub features: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub actions: Vec<Move>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub states: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub state_rects: Vec<[usize; 4]>,
}

fn default_distance_weight() -> f64 {
    -1.0
}

fn default_one() -> f64 {
    1.0
}

fn default_diagonal_length() -> f64 {
    std::f64::consts::SQRT_2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub start: [usize; 2],
    pub goal: [usize; 2],
    /// Defaults to twice the width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default = "default_distance_weight")]
    pub distance_weight: f64,
    /// Distance feature of a diagonal move; orthogonal moves cost 1.
    #[serde(default = "default_diagonal_length")]
    pub diagonal_length: f64,
    #[serde(default = "default_one")]
    pub discount: f64,
    #[serde(default = "default_one")]
    pub rationality: f64,
    /// Probability that a move veers 45° to either side.
    #[serde(default)]
    pub slip: f64,
    #[serde(default, rename = "feature", skip_serializing_if = "Vec::is_empty")]
    pub features: Vec<ColourFeature>,
    #[serde(default)]
    pub truth: PlantedConstraints,
}

/// Shipped configuration names.
pub const SHIPPED_CONFIGS: [&str; 3] = ["paper_9x9", "tiny_3x3_oracle", "human_room_grid"];

impl GridConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, GridError> {
        toml::from_str(s).map_err(|e| GridError::Parse(e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self, GridError> {
        serde_json::from_str(s).map_err(|e| GridError::Parse(e.to_string()))
    }

    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self, GridError> {
        let text = std::fs::read_to_string(path).map_err(|e| GridError::Parse(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    /// TOML source of a shipped config.
    pub fn shipped_source(name: &str) -> Option<&'static str> {
        match name {
            "paper_9x9" => Some(include_str!("../../../configs/paper_9x9.toml")),
            "tiny_3x3_oracle" => Some(include_str!("../../../configs/tiny_3x3_oracle.toml")),
            "human_room_grid" => Some(include_str!("../../../configs/human_room_grid.toml")),
            _ => None,
        }
    }

    pub fn shipped(name: &str) -> Result<Self, GridError> {
        let text = Self::shipped_source(name).ok_or_else(|| GridError::UnknownConfig(name.to_owned()))?;
        Self::from_toml_str(text)
    }

    pub fn horizon(&self) -> usize {
        self.horizon.unwrap_or(2 * self.width)
    }

    pub fn layout(&self) -> GridLayout {
        GridLayout { width: self.width, height: self.height }
    }
}

/// Nominal model, planted truth, and the true model the expert acts in.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWorld {
    pub config: GridConfig,
    pub nominal: Mdp,
    pub truth: ConstraintSet,
    /// `apply_constraints(nominal, truth)`.
    pub true_mdp: Mdp,
}

impl GridWorld {
    pub fn layout(&self) -> GridLayout {
        self.config.layout()
    }

    /// The dynamics demonstrations are drawn from: the true model with
    /// transitions into empty states removed.
    pub fn demonstrator_mdp(&self) -> Result<Mdp, GridError> {
        Ok(stochastic_observation_model(&self.nominal, &self.truth.closed(&self.nominal))?.mdp)
    }

    /// Converts a cell sequence into a trajectory, padding with `stay` once
    /// the goal is reached.
    pub fn cells_to_trajectory(&self, cells: &[[usize; 2]]) -> Result<Trajectory, Violation> {
        let layout = self.layout();
        let horizon = self.nominal.horizon();
        if cells.is_empty() || cells.len() > horizon + 1 {
            return Err(Violation::Length {
                expected_actions: horizon,
                actions: cells.len().saturating_sub(1),
                states: cells.len(),
            });
        }
        let mut states = Vec::with_capacity(horizon + 1);
        for (t, &[x, y]) in cells.iter().enumerate() {
            if x >= layout.width || y >= layout.height {
                return Err(Violation::StateOutOfRange { t, state: y * layout.width + x });
            }
            states.push(layout.state(x, y));
        }
        let mut actions = Vec::with_capacity(horizon);
        for (t, w) in cells.windows(2).enumerate() {
            let dx = w[1][0] as i64 - w[0][0] as i64;
            let dy = w[1][1] as i64 - w[0][1] as i64;
            match Move::from_delta(dx, dy) {
                Some(m) => actions.push(m.index()),
                None => return Err(Violation::NotAdjacent { t, state: states[t], next: states[t + 1] }),
            }
        }
        let last = *states.last().expect("non-empty");
        while states.len() < horizon + 1 {
            states.push(last);
            actions.push(Move::Stay.index());
        }
        Ok(Trajectory::new(states, actions))
    }
}

fn build_error(msg: impl Into<String>) -> GridError {
    GridError::InvalidConfig(msg.into())
}

/// Builds the nominal grid MDP and its planted constraints.
///
/// State `y * width + x` has one action per in-grid king move; the goal is
/// absorbing with a single zero-feature `stay` action. Feature 0 is the
/// move's length, followed by the coloured features in config order.
pub fn build_gridworld(cfg: &GridConfig) -> Result<GridWorld, GridError> {
    let (w, h) = (cfg.width, cfg.height);
    if w == 0 || h == 0 {
        return Err(build_error("grid must have at least one cell"));
    }
    let in_grid = |[x, y]: [usize; 2]| x < w && y < h;
    if !in_grid(cfg.start) || !in_grid(cfg.goal) {
        return Err(build_error("start and goal must lie on the grid"));
    }
    if cfg.start == cfg.goal {
        return Err(build_error("start and goal must differ"));
    }
    if cfg.horizon() == 0 {
        return Err(build_error("horizon must be positive"));
    }
    if !(0.0..1.0).contains(&cfg.slip) {
        return Err(build_error("slip must lie in [0, 1)"));
    }
    if !(cfg.diagonal_length.is_finite() && cfg.diagonal_length > 0.0) {
        return Err(build_error("diagonal_length must be positive"));
    }
    let mut names = vec!["distance".to_owned()];
    for f in &cfg.features {
        if names.contains(&f.name) {
            return Err(build_error(format!("duplicate feature name {:?}", f.name)));
        }
        names.push(f.name.clone());
    }
    let layout = cfg.layout();
    let colour_cells =
        cfg.features.iter().map(|f| expand_region(&f.cells, &f.rects, w, h)).collect::<Result<Vec<_>, _>>()?;

    let k = names.len();
    let goal = layout.state(cfg.goal[0], cfg.goal[1]);
    let mut builder = MdpBuilder::new(w * h, Move::ALL.len(), k);
    let target = |x: usize, y: usize, m: Move| -> Option<usize> {
        let (dx, dy) = m.delta();
        let nx = x as i64 + dx;
        let ny = y as i64 + dy;
        (nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h).then(|| layout.state(nx as usize, ny as usize))
    };
    for s in 0..w * h {
        if s == goal {
            builder = builder.edge(s, Move::Stay.index(), s, &vec![0.0; k]);
            continue;
        }
        let (x, y) = layout.cell(s);
        for m in &Move::ALL[..8] {
            let Some(next) = target(x, y, *m) else { continue };
            let mut feat = vec![0.0; k];
            feat[0] = if m.is_diagonal() { cfg.diagonal_length } else { 1.0 };
            for (i, f) in cfg.features.iter().enumerate() {
                let action_ok = f.actions.as_ref().is_none_or(|acts| acts.contains(m));
                if action_ok && colour_cells[i].contains(&(x, y)) {
                    feat[i + 1] = 1.0;
                }
            }
            let mut succ = vec![Successor::new(next, 1.0 - cfg.slip)];
            if cfg.slip > 0.0 {
                for side in m.neighbours() {
                    let (state, prob) = match target(x, y, side) {
                        Some(t) => (t, cfg.slip / 2.0),
                        None => (next, cfg.slip / 2.0),
                    };
                    match succ.iter_mut().find(|x| x.state == state) {
                        Some(e) => e.prob += prob,
                        None => succ.push(Successor::new(state, prob)),
                    }
                }
                succ.sort_by_key(|x| x.state);
            }
            builder = builder.action(s, m.index(), succ, &feat);
        }
    }
    let mut weights = vec![cfg.distance_weight];
    weights.extend(cfg.features.iter().map(|f| f.weight));
    let nominal = builder
        .start(layout.state(cfg.start[0], cfg.start[1]))
        .reward_weights(weights)
        .horizon(cfg.horizon())
        .discount(cfg.discount)
        .rationality(cfg.rationality)
        .goal_states(vec![goal])
        .feature_names(names.clone())
        .action_names(Move::ALL.iter().map(|m| m.as_str().to_owned()).collect())
        .layout(layout)
        .build()
        .map_err(|e| build_error(e.to_string()))?;

    let mut truth = ConstraintSet::new();
    for name in &cfg.truth.features {
        let i = names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| build_error(format!("truth names unknown feature {name:?}")))?;
        truth.insert(MinimalConstraint::feature(i));
    }
    for m in &cfg.truth.actions {
        truth.insert(MinimalConstraint::action(m.index()));
    }
    for (x, y) in expand_region(&cfg.truth.states, &cfg.truth.state_rects, w, h)? {
        truth.insert(MinimalConstraint::state(layout.state(x, y)));
    }
    let true_mdp = apply_constraints(&nominal, &truth)
        .map_err(|_| build_error("planted constraints leave the start state without actions"))?;
    if true_mdp.is_empty_state(goal) {
        return Err(build_error("planted constraints remove the goal"));
    }
    Ok(GridWorld { config: cfg.clone(), nominal, truth, true_mdp })
}

pub fn shipped_gridworld(name: &str) -> Result<GridWorld, GridError> {
    build_gridworld(&GridConfig::shipped(name)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub n_demos: usize,
    pub threshold: f64,
    pub fp_rate: f64,
    pub final_kl: f64,
    pub result: InferenceResult,
}

impl ExperimentReport {
    pub fn n_selected(&self) -> usize {
        self.result.selected.len()
    }
}

/// Draws `n_demos` demonstrations from the true model with `seed`.
pub fn sample_demos(world: &GridWorld, n_demos: usize, seed: u64) -> Result<DemoSet, GridError> {
    let truth_mdp = world.demonstrator_mdp()?;
    let (pol, _) = backward_pass(&truth_mdp)?;
    Ok(sample_trajectories(&truth_mdp, &pol, n_demos, seed)?)
}

/// Samples demonstrations from the true model and infers constraints on the
/// nominal model.
pub fn run_experiment(
    world: &GridWorld,
    seed: u64,
    n_demos: usize,
    config: &InferenceConfig,
) -> Result<ExperimentReport, GridError> {
    let demos = sample_demos(world, n_demos, seed)?;
    let result = greedy_iterative_inference(&world.nominal, &demos, config)?;
    Ok(ExperimentReport {
        seed,
        n_demos,
        threshold: config.threshold,
        fp_rate: false_positive_rate(&world.nominal, &result.selected, &world.truth),
        final_kl: result.final_kl,
        result,
    })
}

/// [`run_experiment`] on the shipped `paper_9x9` world.
pub fn paper_experiment(seed: u64, n_demos: usize, d_kl: f64) -> Result<ExperimentReport, GridError> {
    let world = shipped_gridworld("paper_9x9")?;
    run_experiment(&world, seed, n_demos, &InferenceConfig::with_threshold(d_kl))
}

/// Every `(n_demos, threshold, seed)` cell, in that nesting order.
///
/// Demonstrations depend only on `(seed, n_demos)`, so thresholds are
/// compared on identical draws.
pub fn sweep(
    world: &GridWorld,
    n_demos: &[usize],
    thresholds: &[f64],
    seeds: &[u64],
) -> Result<Vec<ExperimentReport>, GridError> {
    let cells: Vec<(usize, f64, u64)> = n_demos
        .iter()
        .flat_map(|&n| thresholds.iter().flat_map(move |&d| seeds.iter().map(move |&s| (n, d, s))))
        .collect();
    cells
        .into_par_iter()
        .map(|(n, d, seed)| run_experiment(world, seed, n, &InferenceConfig::with_threshold(d)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strip(width: usize) -> GridConfig {
        GridConfig {
            name: String::new(),
            width,
            height: 1,
            start: [0, 0],
            goal: [width - 1, 0],
            horizon: None,
            distance_weight: -1.0,
            diagonal_length: std::f64::consts::SQRT_2,
            discount: 1.0,
            rationality: 1.0,
            slip: 0.0,
            features: vec![],
            truth: PlantedConstraints::default(),
        }
    }

    #[test]
    fn two_cell_strip() {
        let world = build_gridworld(&strip(2)).unwrap();
        let m = &world.nominal;
        assert_eq!(m.available_actions(0), &[Move::Right.index()]);
        assert_eq!(m.available_actions(1), &[Move::Stay.index()]);
        assert_eq!(m.horizon(), 4);
    }

    #[test]
    fn corners_have_three_moves() {
        let mut cfg = strip(3);
        cfg.height = 3;
        cfg.goal = [1, 1];
        let world = build_gridworld(&cfg).unwrap();
        let layout = cfg.layout();
        for (x, y) in [(0, 0), (2, 0), (0, 2), (2, 2)] {
            assert_eq!(world.nominal.available_actions(layout.state(x, y)).len(), 3);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = strip(3);
        cfg.goal = cfg.start;
        assert!(matches!(build_gridworld(&cfg), Err(GridError::InvalidConfig(_))));
        let mut cfg = strip(3);
        cfg.truth.states = vec![[0, 0]];
        assert!(matches!(build_gridworld(&cfg), Err(GridError::InvalidConfig(_))));
        let mut cfg = strip(3);
        cfg.truth.features = vec!["blue".into()];
        assert!(matches!(build_gridworld(&cfg), Err(GridError::InvalidConfig(_))));
    }

    #[test]
    fn slip_rows_normalize() {
        let mut cfg = strip(4);
        cfg.height = 4;
        cfg.slip = 0.2;
        let world = build_gridworld(&cfg).unwrap();
        for (s, a) in world.nominal.available_pairs() {
            let total: f64 = world.nominal.successors(s, a).iter().map(|x| x.prob).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cells_pad_with_stay() {
        let world = build_gridworld(&strip(3)).unwrap();
        let xi = world.cells_to_trajectory(&[[0, 0], [1, 0], [2, 0]]).unwrap();
        assert_eq!(xi.states, vec![0, 1, 2, 2, 2, 2, 2]);
        assert_eq!(xi.actions[2..], [Move::Stay.index(); 4]);
        let jump = world.cells_to_trajectory(&[[0, 0], [2, 0]]).unwrap_err();
        assert!(matches!(jump, Violation::NotAdjacent { t: 0, .. }));
    }

    #[test]
    fn shipped_configs_build() {
        for name in SHIPPED_CONFIGS {
            let world = shipped_gridworld(name).unwrap();
            assert_eq!(world.true_mdp, apply_constraints(&world.nominal, &world.truth).unwrap());
        }
        assert!(matches!(GridConfig::shipped("nope"), Err(GridError::UnknownConfig(_))));
    }
}
