use super::constraint::remove_pairs;
use super::{ConstraintSet, Mdp, MdpError, Successor};
use crate::maxent::TimeVaryingPolicy;
use crate::numeric::log_sum_exp;

const BLOCKED_TOL: f64 = 1e-12;

/// The apparent MDP seen through demonstrations that never enter an empty
/// state: transitions into empty states are dropped and the rest
/// renormalized, and observed action frequencies are reweighted by each
/// action's survival probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedMdp {
    pub mdp: Mdp,
    /// `1 - P_sa(S_empty)` under the original dynamics, indexed `s * |A| + a`.
    survival: Vec<f64>,
}

impl ObservedMdp {
    pub fn survival(&self, s: usize, a: usize) -> f64 {
        self.survival[s * self.mdp.n_actions + a]
    }

    /// `π^C(a|s,t) ∝ π(a|s,t) (1 - P_sa(S_empty))` over the remaining actions.
    pub fn observe_policy(&self, pol: &TimeVaryingPolicy) -> TimeVaryingPolicy {
        let mdp = &self.mdp;
        let mut out = pol.clone();
        if self.survival.iter().all(|&p| p == 1.0) {
            return out;
        }
        let mut scratch = Vec::with_capacity(mdp.n_actions);
        for t in 0..pol.horizon() {
            for s in 0..mdp.n_states {
                let actions = mdp.available_actions(s);
                if actions.is_empty() {
                    continue;
                }
                scratch.clear();
                scratch.extend(actions.iter().map(|&a| pol.log_prob(t, s, a) + self.survival(s, a).ln()));
                let norm = log_sum_exp(&scratch);
                for (&a, lp) in actions.iter().zip(&scratch) {
                    out.set_log_prob(t, s, a, lp - norm);
                }
            }
        }
        out
    }
}

/// Builds the observation model for `c` on `mdp`.
///
/// `c` must already carry its empty-state closure (see
/// [`ConstraintSet::closed`]); a pair that still reaches empty states with
/// probability one is reported as [`MdpError::TotallyBlocked`].
pub fn stochastic_observation_model(mdp: &Mdp, c: &ConstraintSet) -> Result<ObservedMdp, MdpError> {
    let available = remove_pairs(mdp, c);
    let empty: Vec<bool> = available.iter().map(Vec::is_empty).collect();
    let n_a = mdp.n_actions;
    let mut out = mdp.clone();
    let mut survival = vec![1.0; mdp.n_states * n_a];
    for s in 0..mdp.n_states {
        for &a in &available[s] {
            let succ = mdp.successors(s, a);
            let blocked: f64 = succ.iter().filter(|x| empty[x.state]).map(|x| x.prob).sum();
            if blocked >= 1.0 - BLOCKED_TOL {
                return Err(MdpError::TotallyBlocked { state: s, action: a });
            }
            if blocked > 0.0 {
                let keep = 1.0 - blocked;
                out.transitions[s * n_a + a] =
                    succ.iter().filter(|x| !empty[x.state]).map(|x| Successor::new(x.state, x.prob / keep)).collect();
            }
            survival[s * n_a + a] = 1.0 - blocked;
        }
    }
    let start_mass: f64 = (0..mdp.n_states).filter(|&s| !empty[s]).map(|s| mdp.initial[s]).sum();
    if !(start_mass > 0.0) {
        return Err(MdpError::FullyConstrained);
    }
    out.available = available;
    Ok(ObservedMdp { mdp: out, survival })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{apply_constraints, MdpBuilder, MinimalConstraint};

    fn toy() -> Mdp {
        // state 0: action 0 splits 50/50 between 1 and 2; action 1 goes to 1.
        MdpBuilder::new(3, 2, 1)
            .action(0, 0, vec![Successor::new(1, 0.5), Successor::new(2, 0.5)], &[0.0])
            .edge(0, 1, 1, &[1.0])
            .edge(1, 0, 1, &[0.0])
            .edge(2, 0, 2, &[0.0])
            .start(0)
            .reward_weights(vec![-0.3])
            .horizon(2)
            .build()
            .unwrap()
    }

    #[test]
    fn renormalizes_half_blocked_action() {
        let mdp = toy();
        let c = ConstraintSet::from_minimal([MinimalConstraint::state(2)]).closed(&mdp);
        let obs = stochastic_observation_model(&mdp, &c).unwrap();
        assert_eq!(obs.mdp.successors(0, 0), &[Successor::new(1, 1.0)]);
        assert_eq!(obs.survival(0, 0), 0.5);
        assert_eq!(obs.survival(0, 1), 1.0);
    }

    #[test]
    fn unclosed_set_is_totally_blocked() {
        let mdp =
            MdpBuilder::new(2, 1, 1).edge(0, 0, 1, &[0.0]).edge(1, 0, 1, &[0.0]).start(0).horizon(1).build().unwrap();
        let raw = ConstraintSet::from_minimal([MinimalConstraint::state(1)]);
        assert_eq!(stochastic_observation_model(&mdp, &raw), Err(MdpError::TotallyBlocked { state: 0, action: 0 }));
    }

    #[test]
    fn deterministic_matches_apply_constraints() {
        let mdp = MdpBuilder::new(3, 2, 1)
            .edge(0, 0, 1, &[0.0])
            .edge(0, 1, 2, &[0.0])
            .edge(1, 0, 1, &[0.0])
            .edge(2, 0, 2, &[0.0])
            .start(0)
            .horizon(2)
            .build()
            .unwrap();
        let c = ConstraintSet::from_minimal([MinimalConstraint::state(2)]).closed(&mdp);
        let obs = stochastic_observation_model(&mdp, &c).unwrap();
        assert_eq!(obs.mdp, apply_constraints(&mdp, &c).unwrap());
    }
}
