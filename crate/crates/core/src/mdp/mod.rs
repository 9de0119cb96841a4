//! Finite-horizon tabular MDPs with linear feature rewards.
//!
//! States and actions are dense indices. Each state carries its own set of
//! available actions; transitions are stored per `(s, a)` as sparse successor
//! lists. Feature vectors are non-negative and the reward is either linear in
//! the features or an explicit per-pair table.

mod constraint;
mod features;
mod observation;
mod trajectory;

pub use constraint::{apply_constraints, empty_state_closure, ConstraintKind, ConstraintSet, MinimalConstraint};
pub use features::{accrued_features, AugmentedFeatureMap, IndicatorMap, UnionIndicator};
pub use observation::{stochastic_observation_model, ObservedMdp};
pub use trajectory::{trajectory_reward, validate_trajectory, Feasibility, Trajectory, Violation};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for probability vectors summing to one.
pub const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("invalid MDP: {0}")]
    Invalid(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("constraints leave no initial state with an available action")]
    FullyConstrained,
    #[error("state {state} action {action} leads to empty states with probability 1 but is still available")]
    TotallyBlocked { state: usize, action: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Successor {
    #[serde(rename = "s'")]
    pub state: usize,
    #[serde(rename = "p")]
    pub prob: f64,
}

impl Successor {
    pub fn new(state: usize, prob: f64) -> Self {
        Self { state, prob }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reward {
    /// `R(s, a) = w · φ(s, a)`.
    Linear(Vec<f64>),
    /// Explicit `R(s, a)`, indexed `s * n_actions + a`.
    Table(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
}

impl GridLayout {
    /// Cell `(x, y)` of state `s`, with `y = 0` the bottom row.
    pub fn cell(&self, s: usize) -> (usize, usize) {
        (s % self.width, s / self.width)
    }

    pub fn state(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }
}

/// A finite-horizon MDP `(S, {A_s}, {P_sa}, D_0, φ, R, γ, T, β)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    pub(crate) n_states: usize,
    pub(crate) n_actions: usize,
    pub(crate) n_features: usize,
    /// Sorted available actions per state.
    pub(crate) available: Vec<Vec<usize>>,
    /// Successors indexed `s * n_actions + a`; empty for pairs never available.
    pub(crate) transitions: Vec<Vec<Successor>>,
    pub(crate) initial: Vec<f64>,
    /// Features indexed `(s * n_actions + a) * n_features + i`.
    pub(crate) features: Vec<f64>,
    pub(crate) reward: Reward,
    pub(crate) horizon: usize,
    pub(crate) discount: f64,
    pub(crate) rationality: f64,
    pub(crate) goal_states: Vec<usize>,
    pub(crate) feature_names: Vec<String>,
    pub(crate) action_names: Vec<String>,
    pub(crate) layout: Option<GridLayout>,
}

impl Mdp {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn rationality(&self) -> f64 {
        self.rationality
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial
    }

    pub fn goal_states(&self) -> &[usize] {
        &self.goal_states
    }

    pub fn layout(&self) -> Option<GridLayout> {
        self.layout
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn reward_spec(&self) -> &Reward {
        &self.reward
    }

    pub fn available_actions(&self, s: usize) -> &[usize] {
        &self.available[s]
    }

    pub fn is_available(&self, s: usize, a: usize) -> bool {
        self.available[s].binary_search(&a).is_ok()
    }

    /// Whether the state has no available action left.
    pub fn is_empty_state(&self, s: usize) -> bool {
        self.available[s].is_empty()
    }

    pub fn successors(&self, s: usize, a: usize) -> &[Successor] {
        &self.transitions[s * self.n_actions + a]
    }

    /// `P(s' | s, a)`, zero when `s'` is not a listed successor.
    pub fn transition_prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.successors(s, a).iter().filter(|succ| succ.state == next).map(|succ| succ.prob).sum()
    }

    pub fn feature(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_features;
        &self.features[start..start + self.n_features]
    }

    /// `R(s, a)` without the rationality scale.
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        match &self.reward {
            Reward::Linear(w) => w.iter().zip(self.feature(s, a)).map(|(wi, fi)| wi * fi).sum(),
            Reward::Table(table) => table[s * self.n_actions + a],
        }
    }

    /// Whether every available `(s, a)` has exactly one successor.
    pub fn is_deterministic(&self) -> bool {
        (0..self.n_states).all(|s| self.available[s].iter().all(|&a| self.successors(s, a).len() == 1))
    }

    /// All `(s, a)` pairs currently available, in `(s, a)` order.
    pub fn available_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_states).flat_map(move |s| self.available[s].iter().map(move |&a| (s, a)))
    }

    /// Copy of this MDP with a linear reward `w`.
    pub fn with_reward_weights(&self, weights: Vec<f64>) -> Result<Mdp, MdpError> {
        if weights.len() != self.n_features {
            return Err(MdpError::DimensionMismatch(format!(
                "{} reward weights for {} features",
                weights.len(),
                self.n_features
            )));
        }
        let mut out = self.clone();
        out.reward = Reward::Linear(weights);
        Ok(out)
    }

    pub fn with_horizon(&self, horizon: usize) -> Mdp {
        let mut out = self.clone();
        out.horizon = horizon;
        out
    }

    pub fn with_rationality(&self, rationality: f64) -> Mdp {
        let mut out = self.clone();
        out.rationality = rationality;
        out
    }

    pub fn with_initial_dist(&self, initial: Vec<f64>) -> Result<Mdp, MdpError> {
        let mut out = self.clone();
        out.initial = initial;
        out.validate()?;
        Ok(out)
    }

    pub(crate) fn validate(&self) -> Result<(), MdpError> {
        let n_pairs = self.n_states * self.n_actions;
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(MdpError::Invalid("empty state or action set".into()));
        }
        if self.available.len() != self.n_states
            || self.transitions.len() != n_pairs
            || self.initial.len() != self.n_states
            || self.features.len() != n_pairs * self.n_features
        {
            return Err(MdpError::DimensionMismatch("table sizes disagree with |S|, |A|, k".into()));
        }
        match &self.reward {
            Reward::Linear(w) if w.len() != self.n_features => {
                return Err(MdpError::DimensionMismatch(format!(
                    "{} reward weights for {} features",
                    w.len(),
                    self.n_features
                )))
            }
            Reward::Table(t) if t.len() != n_pairs => {
                return Err(MdpError::DimensionMismatch("reward table size".into()))
            }
            _ => {}
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(MdpError::Invalid(format!("discount {} not in (0, 1]", self.discount)));
        }
        if !(self.rationality >= 0.0) || !self.rationality.is_finite() {
            return Err(MdpError::Invalid(format!("rationality {} must be >= 0", self.rationality)));
        }
        if self.initial.iter().any(|&p| !(p >= 0.0)) {
            return Err(MdpError::Invalid("negative initial probability".into()));
        }
        let total: f64 = self.initial.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(MdpError::Invalid(format!("initial distribution sums to {total}")));
        }
        if let Some(f) = self.features.iter().find(|f| !(**f >= 0.0) || !f.is_finite()) {
            return Err(MdpError::Invalid(format!("feature value {f} is not finite and non-negative")));
        }
        for (s, actions) in self.available.iter().enumerate() {
            if actions.windows(2).any(|w| w[0] >= w[1]) {
                return Err(MdpError::Invalid(format!("state {s}: actions not sorted/unique")));
            }
            for &a in actions {
                if a >= self.n_actions {
                    return Err(MdpError::Invalid(format!("state {s}: action {a} out of range")));
                }
                let succ = self.successors(s, a);
                if succ.iter().any(|x| x.state >= self.n_states || !(x.prob > 0.0)) {
                    return Err(MdpError::Invalid(format!(
                        "state {s} action {a}: successor out of range or non-positive probability"
                    )));
                }
                let sum: f64 = succ.iter().map(|x| x.prob).sum();
                if (sum - 1.0).abs() > PROB_TOL {
                    return Err(MdpError::Invalid(format!(
                        "state {s} action {a}: transition probabilities sum to {sum}"
                    )));
                }
            }
        }
        if let Some(&g) = self.goal_states.iter().find(|&&g| g >= self.n_states) {
            return Err(MdpError::Invalid(format!("goal state {g} out of range")));
        }
        if self.feature_names.len() != self.n_features || self.action_names.len() != self.n_actions {
            return Err(MdpError::DimensionMismatch("name tables".into()));
        }
        if let Some(layout) = self.layout {
            if layout.width * layout.height != self.n_states {
                return Err(MdpError::DimensionMismatch("grid layout does not cover states".into()));
            }
        }
        Ok(())
    }
}

/// Incremental construction of an [`Mdp`]; `build` checks every invariant.
#[derive(Debug, Clone)]
pub struct MdpBuilder {
    mdp: Mdp,
}

impl MdpBuilder {
    pub fn new(n_states: usize, n_actions: usize, n_features: usize) -> Self {
        let n_pairs = n_states * n_actions;
        Self {
            mdp: Mdp {
                n_states,
                n_actions,
                n_features,
                available: vec![Vec::new(); n_states],
                transitions: vec![Vec::new(); n_pairs],
                initial: vec![0.0; n_states],
                features: vec![0.0; n_pairs * n_features],
                reward: Reward::Linear(vec![0.0; n_features]),
                horizon: 1,
                discount: 1.0,
                rationality: 1.0,
                goal_states: Vec::new(),
                feature_names: (0..n_features).map(|i| format!("f{i}")).collect(),
                action_names: (0..n_actions).map(|a| format!("a{a}")).collect(),
                layout: None,
            },
        }
    }

    /// Makes `a` available in `s` with the given successors and features.
    pub fn action(mut self, s: usize, a: usize, successors: Vec<Successor>, features: &[f64]) -> Self {
        let n_a = self.mdp.n_actions;
        let k = self.mdp.n_features;
        if let Err(pos) = self.mdp.available[s].binary_search(&a) {
            self.mdp.available[s].insert(pos, a);
        }
        self.mdp.transitions[s * n_a + a] = successors;
        let start = (s * n_a + a) * k;
        self.mdp.features[start..start + k].copy_from_slice(features);
        self
    }

    /// Deterministic shorthand for [`MdpBuilder::action`].
    pub fn edge(self, s: usize, a: usize, next: usize, features: &[f64]) -> Self {
        self.action(s, a, vec![Successor::new(next, 1.0)], features)
    }

    pub fn initial(mut self, dist: Vec<f64>) -> Self {
        self.mdp.initial = dist;
        self
    }

    pub fn start(mut self, s: usize) -> Self {
        self.mdp.initial = vec![0.0; self.mdp.n_states];
        self.mdp.initial[s] = 1.0;
        self
    }

    pub fn reward_weights(mut self, w: Vec<f64>) -> Self {
        self.mdp.reward = Reward::Linear(w);
        self
    }

    pub fn reward_table(mut self, table: Vec<f64>) -> Self {
        self.mdp.reward = Reward::Table(table);
        self
    }

    pub fn horizon(mut self, t: usize) -> Self {
        self.mdp.horizon = t;
        self
    }

    pub fn discount(mut self, gamma: f64) -> Self {
        self.mdp.discount = gamma;
        self
    }

    pub fn rationality(mut self, beta: f64) -> Self {
        self.mdp.rationality = beta;
        self
    }

    pub fn goal_states(mut self, goals: Vec<usize>) -> Self {
        self.mdp.goal_states = goals;
        self
    }

    pub fn feature_names(mut self, names: Vec<String>) -> Self {
        self.mdp.feature_names = names;
        self
    }

    pub fn action_names(mut self, names: Vec<String>) -> Self {
        self.mdp.action_names = names;
        self
    }

    pub fn layout(mut self, layout: GridLayout) -> Self {
        self.mdp.layout = Some(layout);
        self
    }

    pub fn build(self) -> Result<Mdp, MdpError> {
        self.mdp.validate()?;
        Ok(self.mdp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> MdpBuilder {
        MdpBuilder::new(2, 1, 1).edge(0, 0, 1, &[1.0]).edge(1, 0, 1, &[0.0]).start(0).reward_weights(vec![-1.0])
    }

    #[test]
    fn builds_and_reports_reward() {
        let mdp = two_state().horizon(3).build().unwrap();
        assert_eq!(mdp.reward(0, 0), -1.0);
        assert_eq!(mdp.reward(1, 0), 0.0);
        assert!(mdp.is_deterministic());
        assert_eq!(mdp.available_pairs().count(), 2);
    }

    #[test]
    fn rejects_unnormalized_transitions() {
        let err = two_state().action(0, 0, vec![Successor::new(1, 0.5)], &[1.0]).build().unwrap_err();
        assert!(matches!(err, MdpError::Invalid(_)));
    }

    #[test]
    fn rejects_bad_initial_and_negative_features() {
        assert!(two_state().initial(vec![0.5, 0.4]).build().is_err());
        assert!(two_state().edge(1, 0, 1, &[-0.1]).build().is_err());
    }

    #[test]
    fn rejects_wrong_weight_count() {
        let err = two_state().reward_weights(vec![1.0, 2.0]).build().unwrap_err();
        assert!(matches!(err, MdpError::DimensionMismatch(_)));
    }
}
