use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Mdp, MdpError};

/// Probability mass into empty states at which an action counts as blocked.
const BLOCKED_TOL: f64 = 1e-12;

/// Constraint classes, declared in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Feature,
    State,
    Action,
}

impl ConstraintKind {
    pub const ALL: [ConstraintKind; 3] = [Self::Feature, Self::State, Self::Action];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Feature => "feature",
            Self::State => "state",
            Self::Action => "action",
        }
    }
}

impl std::str::FromStr for ConstraintKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "feature" => Ok(Self::Feature),
            "state" => Ok(Self::State),
            "action" => Ok(Self::Action),
            other => Err(format!("unknown constraint kind `{other}`")),
        }
    }
}

/// A constraint on a single state, action or feature.
///
/// The derived order is the canonical one: features by index, then states,
/// then actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MinimalConstraint {
    pub kind: ConstraintKind,
    pub index: usize,
}

impl MinimalConstraint {
    pub fn feature(i: usize) -> Self {
        Self { kind: ConstraintKind::Feature, index: i }
    }

    pub fn state(s: usize) -> Self {
        Self { kind: ConstraintKind::State, index: s }
    }

    pub fn action(a: usize) -> Self {
        Self { kind: ConstraintKind::Action, index: a }
    }

    /// Whether `(s, a)` belongs to this constraint's set.
    pub fn contains(&self, mdp: &Mdp, s: usize, a: usize) -> bool {
        match self.kind {
            ConstraintKind::Feature => mdp.feature(s, a)[self.index] > 0.0,
            ConstraintKind::State => s == self.index,
            ConstraintKind::Action => a == self.index,
        }
    }

    pub fn in_range(&self, mdp: &Mdp) -> bool {
        let bound = match self.kind {
            ConstraintKind::Feature => mdp.n_features,
            ConstraintKind::State => mdp.n_states,
            ConstraintKind::Action => mdp.n_actions,
        };
        self.index < bound
    }

    /// Human-readable label using the MDP's names where available.
    pub fn describe(&self, mdp: &Mdp) -> String {
        match self.kind {
            ConstraintKind::Feature => format!("feature {}", mdp.feature_names[self.index]),
            ConstraintKind::Action => format!("action {}", mdp.action_names[self.index]),
            ConstraintKind::State => match mdp.layout {
                Some(layout) => {
                    let (x, y) = layout.cell(self.index);
                    format!("state {} ({x},{y})", self.index)
                }
                None => format!("state {}", self.index),
            },
        }
    }
}

impl fmt::Display for MinimalConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.as_str(), self.index)
    }
}

/// A union of minimal constraints plus the pairs removed by empty-state
/// propagation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConstraintSet {
    minimal: Vec<MinimalConstraint>,
    closure: BTreeSet<(usize, usize)>,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_minimal<I: IntoIterator<Item = MinimalConstraint>>(items: I) -> Self {
        let mut set = Self::new();
        for c in items {
            set.insert(c);
        }
        set
    }

    /// Adds `c` unless already present. Invalidates any computed closure.
    pub fn insert(&mut self, c: MinimalConstraint) -> bool {
        if self.minimal.contains(&c) {
            return false;
        }
        self.minimal.push(c);
        self.closure.clear();
        true
    }

    pub fn with(&self, c: MinimalConstraint) -> Self {
        let mut out = self.clone();
        out.insert(c);
        out
    }

    pub fn minimal(&self) -> &[MinimalConstraint] {
        &self.minimal
    }

    pub fn closure(&self) -> &BTreeSet<(usize, usize)> {
        &self.closure
    }

    pub fn is_empty(&self) -> bool {
        self.minimal.is_empty()
    }

    pub fn len(&self) -> usize {
        self.minimal.len()
    }

    pub fn contains(&self, c: &MinimalConstraint) -> bool {
        self.minimal.contains(c)
    }

    /// Same constraints with the empty-state closure computed against `mdp`.
    pub fn closed(&self, mdp: &Mdp) -> Self {
        Self { minimal: self.minimal.clone(), closure: empty_state_closure(mdp, self) }
    }

    /// Whether `(s, a)` lies in some minimal constraint or the closure.
    pub fn contains_pair(&self, mdp: &Mdp, s: usize, a: usize) -> bool {
        self.closure.contains(&(s, a)) || self.minimal.iter().any(|c| c.contains(mdp, s, a))
    }

    /// The induced set of available pairs of `mdp` that the set forbids.
    pub fn pairs(&self, mdp: &Mdp) -> BTreeSet<(usize, usize)> {
        mdp.available_pairs().filter(|&(s, a)| self.contains_pair(mdp, s, a)).collect()
    }
}

/// Available action sets after removing the minimal constraints only.
fn restrict(mdp: &Mdp, c: &ConstraintSet) -> Vec<Vec<usize>> {
    (0..mdp.n_states)
        .map(|s| {
            mdp.available[s].iter().copied().filter(|&a| !c.minimal.iter().any(|m| m.contains(mdp, s, a))).collect()
        })
        .collect()
}

fn empty_mass(mdp: &Mdp, s: usize, a: usize, empty: &[bool]) -> f64 {
    mdp.successors(s, a).iter().filter(|succ| empty[succ.state]).map(|succ| succ.prob).sum()
}

/// Pairs removed by repeatedly forbidding actions that reach empty states
/// with probability one, until nothing changes.
pub fn empty_state_closure(mdp: &Mdp, c: &ConstraintSet) -> BTreeSet<(usize, usize)> {
    let mut available = restrict(mdp, c);
    propagate_empty(mdp, &mut available)
}

fn propagate_empty(mdp: &Mdp, available: &mut [Vec<usize>]) -> BTreeSet<(usize, usize)> {
    let mut closure = BTreeSet::new();
    loop {
        let empty: Vec<bool> = available.iter().map(Vec::is_empty).collect();
        let mut changed = false;
        for s in 0..mdp.n_states {
            available[s].retain(|&a| {
                let blocked = empty_mass(mdp, s, a, &empty) >= 1.0 - BLOCKED_TOL;
                if blocked {
                    closure.insert((s, a));
                    changed = true;
                }
                !blocked
            });
        }
        if !changed {
            return closure;
        }
    }
}

/// `M^C`: removes every constrained pair, then propagates empty states to a
/// fixed point. The input MDP is left untouched.
pub fn apply_constraints(mdp: &Mdp, c: &ConstraintSet) -> Result<Mdp, MdpError> {
    let mut available = restrict(mdp, c);
    propagate_empty(mdp, &mut available);
    let any_start = (0..mdp.n_states).any(|s| mdp.initial[s] > 0.0 && !available[s].is_empty());
    if !any_start {
        return Err(MdpError::FullyConstrained);
    }
    let mut out = mdp.clone();
    out.available = available;
    Ok(out)
}

/// Available sets with only the listed pairs removed, no propagation.
pub(crate) fn remove_pairs(mdp: &Mdp, c: &ConstraintSet) -> Vec<Vec<usize>> {
    let mut available = restrict(mdp, c);
    for &(s, a) in &c.closure {
        available[s].retain(|&x| x != a);
    }
    available
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{MdpBuilder, Successor};

    /// s0 -> s1 -> s2 -> s2, one action each.
    fn chain() -> Mdp {
        MdpBuilder::new(3, 1, 1)
            .edge(0, 0, 1, &[0.0])
            .edge(1, 0, 2, &[0.0])
            .edge(2, 0, 2, &[0.0])
            .start(0)
            .horizon(3)
            .build()
            .unwrap()
    }

    #[test]
    fn empty_constraint_is_identity() {
        let mdp = chain();
        assert_eq!(apply_constraints(&mdp, &ConstraintSet::new()).unwrap(), mdp);
    }

    #[test]
    fn chain_closure_reaches_start() {
        let mdp = chain();
        let c = ConstraintSet::from_minimal([MinimalConstraint::state(2)]);
        let closure = empty_state_closure(&mdp, &c);
        assert_eq!(closure, BTreeSet::from([(0, 0), (1, 0)]));
        assert_eq!(apply_constraints(&mdp, &c), Err(MdpError::FullyConstrained));
    }

    #[test]
    fn closure_stops_at_branch() {
        // s0 has a second action to s3 that survives.
        let mdp = MdpBuilder::new(4, 2, 1)
            .edge(0, 0, 1, &[0.0])
            .edge(0, 1, 3, &[0.0])
            .edge(1, 0, 2, &[0.0])
            .edge(2, 0, 2, &[0.0])
            .edge(3, 0, 3, &[0.0])
            .start(0)
            .horizon(2)
            .build()
            .unwrap();
        let c = ConstraintSet::from_minimal([MinimalConstraint::state(2)]);
        let constrained = apply_constraints(&mdp, &c).unwrap();
        assert_eq!(constrained.available_actions(0), &[1]);
        assert!(constrained.is_empty_state(1));
        assert!(constrained.is_empty_state(2));
        // idempotent
        assert_eq!(apply_constraints(&constrained, &c).unwrap(), constrained);
        let closed = c.closed(&mdp);
        assert_eq!(empty_state_closure(&constrained, &closed), BTreeSet::new());
    }

    #[test]
    fn stochastic_partial_mass_is_not_closed() {
        let mdp = MdpBuilder::new(3, 1, 1)
            .action(0, 0, vec![Successor::new(1, 0.5), Successor::new(2, 0.5)], &[0.0])
            .edge(1, 0, 1, &[0.0])
            .edge(2, 0, 2, &[0.0])
            .start(0)
            .horizon(2)
            .build()
            .unwrap();
        let c = ConstraintSet::from_minimal([MinimalConstraint::state(2)]);
        assert!(empty_state_closure(&mdp, &c).is_empty());
    }

    #[test]
    fn canonical_order() {
        let mut v = vec![
            MinimalConstraint::action(0),
            MinimalConstraint::state(3),
            MinimalConstraint::feature(2),
            MinimalConstraint::state(1),
        ];
        v.sort();
        assert_eq!(
            v,
            vec![
                MinimalConstraint::feature(2),
                MinimalConstraint::state(1),
                MinimalConstraint::state(3),
                MinimalConstraint::action(0)
            ]
        );
    }
}
