//! Finite-horizon maximum entropy trajectory distributions.
//!
//! The backward pass runs the soft-value recursion entirely in log space:
//!
//! ```text
//! V_T(s)   = 0                      (−∞ for an empty state)
//! Q_t(s,a) = β γ^t R(s,a) + log Σ_s' P(s'|s,a) exp V_{t+1}(s')
//! V_t(s)   = log Σ_{a ∈ A_s} exp Q_t(s,a)
//! log Z    = log Σ_s D_0(s) exp V_0(s)
//! ```
//!
//! For deterministic MDPs `exp(log Z)` is exactly `Σ_ξ D_0(s_0) e^{βR(ξ)}`
//! over feasible trajectories, and `π(a|s,t) = exp(Q_t(s,a) − V_t(s))`.

mod likelihood;
mod reward;
mod sample;

pub use likelihood::{demo_set_log_prob, kl_empirical_model, trajectory_log_prob, DemoSet};
pub use reward::{empirical_feature_counts, learn_reward_weights, RewardFit};
pub use sample::sample_trajectories;

use thiserror::Error;

use crate::mdp::{Mdp, Violation};
use crate::numeric::log_sum_exp;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("no feasible trajectory: every initial state is blocked")]
    NoFeasibleTrajectory,
    #[error("trajectory is infeasible: {0}")]
    InfeasibleTrajectory(Violation),
    #[error("demonstration {index} is infeasible: {violation}")]
    InfeasibleDemo { index: usize, violation: Violation },
    #[error("a demonstration set needs at least one trajectory")]
    EmptyDemoSet,
    #[error("policy horizon {policy} does not match MDP horizon {mdp}")]
    HorizonMismatch { policy: usize, mdp: usize },
    #[error("sampling reached state {state} at step {t} with no action of positive probability")]
    DeadEnd { t: usize, state: usize },
    #[error("log-likelihood decreased for {streak} consecutive steps (iteration {iteration})")]
    Divergence { iteration: usize, streak: usize, fit: Box<RewardFit> },
}

/// `π(a | s, t)` for `t < T`, stored as log-probabilities (`−∞` off `A_s`),
/// together with the model's initial-state marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeVaryingPolicy {
    horizon: usize,
    n_states: usize,
    n_actions: usize,
    log_probs: Vec<f64>,
    initial: Vec<f64>,
}

impl TimeVaryingPolicy {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn idx(&self, t: usize, s: usize, a: usize) -> usize {
        (t * self.n_states + s) * self.n_actions + a
    }

    pub fn log_prob(&self, t: usize, s: usize, a: usize) -> f64 {
        self.log_probs[self.idx(t, s, a)]
    }

    pub fn prob(&self, t: usize, s: usize, a: usize) -> f64 {
        self.log_prob(t, s, a).exp()
    }

    pub(crate) fn set_log_prob(&mut self, t: usize, s: usize, a: usize, value: f64) {
        let i = self.idx(t, s, a);
        self.log_probs[i] = value;
    }

    /// Probability that a model trajectory starts in each state.
    pub fn initial_dist(&self) -> &[f64] {
        &self.initial
    }
}

/// `log Z` and the soft values `V_t(s)` for `t = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionValue {
    pub log_z: f64,
    n_states: usize,
    values: Vec<f64>,
}

impl PartitionValue {
    pub fn value(&self, t: usize, s: usize) -> f64 {
        self.values[t * self.n_states + s]
    }

    pub fn horizon(&self) -> usize {
        self.values.len() / self.n_states - 1
    }
}

/// Soft value recursion over the MDP's horizon; see the module docs.
pub fn backward_pass(mdp: &Mdp) -> Result<(TimeVaryingPolicy, PartitionValue), SolverError> {
    let (n_s, n_a, horizon) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let mut values = vec![f64::NEG_INFINITY; (horizon + 1) * n_s];
    for s in 0..n_s {
        if !mdp.is_empty_state(s) {
            values[horizon * n_s + s] = 0.0;
        }
    }
    let mut log_probs = vec![f64::NEG_INFINITY; horizon * n_s * n_a];
    let mut q = Vec::with_capacity(n_a);
    let mut succ_terms = Vec::new();
    let mut scale = mdp.rationality();
    let discounts: Vec<f64> = (0..horizon)
        .map(|_| {
            let current = scale;
            scale *= mdp.discount();
            current
        })
        .collect();

    for t in (0..horizon).rev() {
        let (head, tail) = values.split_at_mut((t + 1) * n_s);
        let next = &tail[..n_s];
        let current = &mut head[t * n_s..];
        for s in 0..n_s {
            let actions = mdp.available_actions(s);
            if actions.is_empty() {
                continue;
            }
            q.clear();
            for &a in actions {
                succ_terms.clear();
                succ_terms.extend(mdp.successors(s, a).iter().map(|x| x.prob.ln() + next[x.state]));
                let reward = if discounts[t] == 0.0 { 0.0 } else { discounts[t] * mdp.reward(s, a) };
                q.push(reward + log_sum_exp(&succ_terms));
            }
            let v = log_sum_exp(&q);
            current[s] = v;
            let row = (t * n_s + s) * n_a;
            if v == f64::NEG_INFINITY {
                // Unreachable with positive mass; keep the row a distribution.
                let uniform = -(actions.len() as f64).ln();
                for &a in actions {
                    log_probs[row + a] = uniform;
                }
            } else {
                for (&a, qa) in actions.iter().zip(&q) {
                    log_probs[row + a] = qa - v;
                }
            }
        }
    }

    let start_terms: Vec<f64> = (0..n_s)
        .map(|s| {
            let d = mdp.initial_dist()[s];
            if d > 0.0 {
                d.ln() + values[s]
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let log_z = log_sum_exp(&start_terms);
    if log_z == f64::NEG_INFINITY {
        return Err(SolverError::NoFeasibleTrajectory);
    }
    let initial = start_terms.iter().map(|x| (x - log_z).exp()).collect();
    Ok((
        TimeVaryingPolicy { horizon, n_states: n_s, n_actions: n_a, log_probs, initial },
        PartitionValue { log_z, n_states: n_s, values },
    ))
}
