use serde::{Deserialize, Serialize};

use super::{Mdp, MdpError};

/// States `s_0..s_T` and the actions `a_0..a_{T-1}` taken between them.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

impl Trajectory {
    pub fn new(states: Vec<usize>, actions: Vec<usize>) -> Self {
        Self { states, actions }
    }

    /// Number of actions taken.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// `(s_t, a_t)` for `t < T`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.states.iter().copied().zip(self.actions.iter().copied())
    }
}

/// First reason a trajectory is not feasible on an MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    Length {
        expected_actions: usize,
        actions: usize,
        states: usize,
    },
    StateOutOfRange {
        t: usize,
        state: usize,
    },
    ActionOutOfRange {
        t: usize,
        action: usize,
    },
    InitialState {
        state: usize,
    },
    ActionUnavailable {
        t: usize,
        state: usize,
        action: usize,
    },
    Transition {
        t: usize,
        state: usize,
        action: usize,
        next: usize,
    },
    EmptyState {
        t: usize,
        state: usize,
    },
    /// Consecutive grid cells more than one king move apart.
    NotAdjacent {
        t: usize,
        state: usize,
        next: usize,
    },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::Length { expected_actions, actions, states } => write!(
                f,
                "expected {expected_actions} actions and {} states, got {actions} actions and {states} states",
                expected_actions + 1
            ),
            Violation::StateOutOfRange { t, state } => write!(f, "step {t}: state {state} out of range"),
            Violation::ActionOutOfRange { t, action } => write!(f, "step {t}: action {action} out of range"),
            Violation::InitialState { state } => write!(f, "initial state {state} has zero probability"),
            Violation::ActionUnavailable { t, state, action } => {
                write!(f, "step {t}: action {action} not available in state {state}")
            }
            Violation::Transition { t, state, action, next } => {
                write!(f, "step {t}: transition {state} --{action}--> {next} has zero probability")
            }
            Violation::EmptyState { t, state } => write!(f, "step {t}: state {state} has no available action"),
            Violation::NotAdjacent { t, state, next } => {
                write!(f, "step {t}: states {state} and {next} are not adjacent cells")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible,
    Infeasible(Violation),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }

    /// The `{0, 1}` feasibility indicator.
    pub fn indicator(&self) -> u8 {
        u8::from(self.is_feasible())
    }

    pub fn violation(&self) -> Option<&Violation> {
        match self {
            Feasibility::Feasible => None,
            Feasibility::Infeasible(v) => Some(v),
        }
    }
}

/// Checks `xi` against the MDP: horizon, initial support, available actions,
/// positive transitions, and that it never rests in an empty state.
pub fn validate_trajectory(mdp: &Mdp, xi: &Trajectory) -> Feasibility {
    use Feasibility::Infeasible;
    let t_max = mdp.horizon;
    if xi.actions.len() != t_max || xi.states.len() != t_max + 1 {
        return Infeasible(Violation::Length {
            expected_actions: t_max,
            actions: xi.actions.len(),
            states: xi.states.len(),
        });
    }
    for (t, &s) in xi.states.iter().enumerate() {
        if s >= mdp.n_states {
            return Infeasible(Violation::StateOutOfRange { t, state: s });
        }
    }
    for (t, &a) in xi.actions.iter().enumerate() {
        if a >= mdp.n_actions {
            return Infeasible(Violation::ActionOutOfRange { t, action: a });
        }
    }
    if !(mdp.initial[xi.states[0]] > 0.0) {
        return Infeasible(Violation::InitialState { state: xi.states[0] });
    }
    for (t, (s, a)) in xi.pairs().enumerate() {
        if !mdp.is_available(s, a) {
            return Infeasible(Violation::ActionUnavailable { t, state: s, action: a });
        }
        let next = xi.states[t + 1];
        if !(mdp.transition_prob(s, a, next) > 0.0) {
            return Infeasible(Violation::Transition { t, state: s, action: a, next });
        }
    }
    let last = xi.states[t_max];
    if mdp.is_empty_state(last) {
        return Infeasible(Violation::EmptyState { t: t_max, state: last });
    }
    Feasibility::Feasible
}

/// `R(ξ) = Σ_t γ^t R(s_t, a_t)`, without the rationality scale.
pub fn trajectory_reward(mdp: &Mdp, xi: &Trajectory) -> Result<f64, MdpError> {
    if xi.states.len() != xi.actions.len() + 1 {
        return Err(MdpError::DimensionMismatch(format!(
            "{} states for {} actions",
            xi.states.len(),
            xi.actions.len()
        )));
    }
    if let Some((t, s)) = xi.states.iter().enumerate().find(|(_, &s)| s >= mdp.n_states) {
        return Err(MdpError::DimensionMismatch(format!("step {t}: state {s} out of range")));
    }
    let mut total = 0.0;
    let mut scale = 1.0;
    for (t, (s, a)) in xi.pairs().enumerate() {
        if s >= mdp.n_states || a >= mdp.n_actions {
            return Err(MdpError::DimensionMismatch(format!("step {t}: ({s}, {a}) out of range")));
        }
        total += scale * mdp.reward(s, a);
        scale *= mdp.discount;
    }
    Ok(total)
}
