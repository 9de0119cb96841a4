//! Forward propagation of state visitation and first-accrual mass.
//!
//! For every indicator `i` the history tracks `Φ̃_t[i]`, the probability that
//! a trajectory of the model has accrued indicator `i` at least once within
//! its first `t` actions. Per state, `Φ̃_{s,t}` is the part of the visitation
//! mass `D_{s,t}` that has already accrued each indicator; taking `a` in `s`
//! moves the not-yet-accrued remainder `D_{s,t} − Φ̃_{s,t}[i]` over for every
//! indicator that `(s, a)` switches on. Unlike expected feature counts, a
//! trajectory that accrues an indicator twice is counted once.

use thiserror::Error;

use crate::maxent::TimeVaryingPolicy;
use crate::mdp::{AugmentedFeatureMap, ConstraintSet, IndicatorMap, Mdp, MinimalConstraint, UnionIndicator};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AccrualError {
    #[error("policy horizon {policy} does not match MDP horizon {mdp}")]
    HorizonMismatch { policy: usize, mdp: usize },
    #[error("constraint {0} indexes outside the augmented feature map")]
    IndexOutOfRange(MinimalConstraint),
}

/// `Φ̃_{[1,T]}` (one column per time step) and the visitation table
/// `D_{s,t}` for `t = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct AccrualHistory {
    n_indicators: usize,
    n_states: usize,
    horizon: usize,
    /// Columns `t = 1..=T`, each `n_indicators` long.
    columns: Vec<f64>,
    visitation: Vec<f64>,
}

impl AccrualHistory {
    pub fn n_indicators(&self) -> usize {
        self.n_indicators
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// `Φ̃_t` for `1 ≤ t ≤ T`.
    pub fn column(&self, t: usize) -> &[f64] {
        assert!(t >= 1 && t <= self.horizon, "column {t} outside [1, {}]", self.horizon);
        let start = (t - 1) * self.n_indicators;
        &self.columns[start..start + self.n_indicators]
    }

    /// `Φ̃_T`; entry `i` is the mass of trajectories that ever accrue `i`.
    /// All zeros when `T = 0`.
    pub fn final_column(&self) -> Vec<f64> {
        if self.horizon == 0 {
            vec![0.0; self.n_indicators]
        } else {
            self.column(self.horizon).to_vec()
        }
    }

    /// `D_{s,t}` for `0 ≤ t ≤ T`.
    pub fn visitation(&self, t: usize, s: usize) -> f64 {
        self.visitation[t * self.n_states + s]
    }

    /// Eliminated mass of a minimal constraint: `Φ̃_T[index(c)]`.
    pub fn eliminated_mass(&self, map: &AugmentedFeatureMap, c: MinimalConstraint) -> Result<f64, AccrualError> {
        let i = map.index_of(c);
        if i >= self.n_indicators || map.constraint_at(i) != Some(c) {
            return Err(AccrualError::IndexOutOfRange(c));
        }
        Ok(if self.horizon == 0 { 0.0 } else { self.column(self.horizon)[i] })
    }
}

/// Free-function form of [`AccrualHistory::eliminated_mass`].
pub fn eliminated_mass(
    hist: &AccrualHistory,
    map: &AugmentedFeatureMap,
    c: MinimalConstraint,
) -> Result<f64, AccrualError> {
    hist.eliminated_mass(map, c)
}

/// Runs the accrual recursion for `map` under `(π, P)` starting from the
/// policy's initial marginal.
pub fn feature_accrual_history<M: IndicatorMap + ?Sized>(
    mdp: &Mdp,
    map: &M,
    pol: &TimeVaryingPolicy,
) -> Result<AccrualHistory, AccrualError> {
    feature_accrual_history_traced(mdp, map, pol, |_, _, _| {})
}

/// As [`feature_accrual_history`], calling `observe(t, D_t, Φ̃_{·,t})` for
/// every `t = 0..=T`, where the last argument is the `|S| × n` per-state
/// accrual slab.
pub fn feature_accrual_history_traced<M, F>(
    mdp: &Mdp,
    map: &M,
    pol: &TimeVaryingPolicy,
    mut observe: F,
) -> Result<AccrualHistory, AccrualError>
where
    M: IndicatorMap + ?Sized,
    F: FnMut(usize, &[f64], &[f64]),
{
    let horizon = mdp.horizon();
    if pol.horizon() != horizon {
        return Err(AccrualError::HorizonMismatch { policy: pol.horizon(), mdp: horizon });
    }
    let n_s = mdp.n_states();
    let n = map.n_indicators();

    let mut d = pol.initial_dist().to_vec();
    let mut phi = vec![0.0; n_s * n];
    let mut d_next = vec![0.0; n_s];
    let mut phi_next = vec![0.0; n_s * n];
    let mut visitation = Vec::with_capacity((horizon + 1) * n_s);
    let mut columns = Vec::with_capacity(horizon * n);
    // per-successor aggregate weight Σ_a π(a|s,t) P(s'|s,a)
    let mut flow = vec![0.0; n_s];
    let mut touched = Vec::with_capacity(n_s);

    visitation.extend_from_slice(&d);
    observe(0, &d, &phi);
    for t in 0..horizon {
        d_next.fill(0.0);
        phi_next.fill(0.0);
        for s in 0..n_s {
            let mass = d[s];
            if mass == 0.0 {
                continue;
            }
            let row = &phi[s * n..(s + 1) * n];
            touched.clear();
            for &a in mdp.available_actions(s) {
                let p_a = pol.prob(t, s, a);
                if p_a == 0.0 {
                    continue;
                }
                for succ in mdp.successors(s, a) {
                    let w = p_a * succ.prob;
                    if flow[succ.state] == 0.0 {
                        touched.push(succ.state);
                    }
                    flow[succ.state] += w;
                    let target = &mut phi_next[succ.state * n..(succ.state + 1) * n];
                    for &i in map.active(s, a) {
                        target[i] += w * (mass - row[i]);
                    }
                }
            }
            for &next in &touched {
                let w = flow[next];
                flow[next] = 0.0;
                d_next[next] += w * mass;
                let target = &mut phi_next[next * n..(next + 1) * n];
                for (x, r) in target.iter_mut().zip(row) {
                    *x += w * r;
                }
            }
        }
        std::mem::swap(&mut d, &mut d_next);
        std::mem::swap(&mut phi, &mut phi_next);
        visitation.extend_from_slice(&d);
        let start = columns.len();
        columns.resize(start + n, 0.0);
        let column = &mut columns[start..];
        for s in 0..n_s {
            for (c, x) in column.iter_mut().zip(&phi[s * n..(s + 1) * n]) {
                *c += x;
            }
        }
        observe(t + 1, &d, &phi);
    }

    Ok(AccrualHistory { n_indicators: n, n_states: n_s, horizon, columns, visitation })
}

/// Probability that a trajectory of `(π, P)` contains any pair of the
/// union of `c`'s minimal constraints.
pub fn eliminated_mass_compound(mdp: &Mdp, pol: &TimeVaryingPolicy, c: &ConstraintSet) -> Result<f64, AccrualError> {
    let union = UnionIndicator::new(mdp, c);
    Ok(feature_accrual_history(mdp, &union, pol)?.final_column()[0])
}

/// Expected state-action visitation `D_{s,t} π(a|s,t)` for `t < T`, indexed
/// `(t * |S| + s) * |A| + a`.
pub fn state_action_visitation(mdp: &Mdp, pol: &TimeVaryingPolicy) -> Result<Vec<f64>, AccrualError> {
    let horizon = mdp.horizon();
    if pol.horizon() != horizon {
        return Err(AccrualError::HorizonMismatch { policy: pol.horizon(), mdp: horizon });
    }
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    let mut out = vec![0.0; horizon * n_s * n_a];
    let mut d = pol.initial_dist().to_vec();
    for t in 0..horizon {
        let mut d_next = vec![0.0; n_s];
        for s in 0..n_s {
            if d[s] == 0.0 {
                continue;
            }
            for &a in mdp.available_actions(s) {
                let w = d[s] * pol.prob(t, s, a);
                out[(t * n_s + s) * n_a + a] = w;
                for succ in mdp.successors(s, a) {
                    d_next[succ.state] += w * succ.prob;
                }
            }
        }
        d = d_next;
    }
    Ok(out)
}

/// `E[Σ_t γ^t φ(s_t, a_t)]` under `(π, P)`.
pub fn expected_feature_counts(mdp: &Mdp, pol: &TimeVaryingPolicy) -> Result<Vec<f64>, AccrualError> {
    let visits = state_action_visitation(mdp, pol)?;
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    let mut counts = vec![0.0; mdp.n_features()];
    let mut scale = 1.0;
    for t in 0..mdp.horizon() {
        for s in 0..n_s {
            for a in 0..n_a {
                let w = visits[(t * n_s + s) * n_a + a];
                if w == 0.0 {
                    continue;
                }
                for (c, f) in counts.iter_mut().zip(mdp.feature(s, a)) {
                    *c += scale * w * f;
                }
            }
        }
        scale *= mdp.discount();
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maxent::backward_pass;
    use crate::mdp::MdpBuilder;

    fn branching() -> Mdp {
        // 0 --a0--> 1, 0 --a1--> 2; 1 and 2 both loop with a0.
        // feature 0 on every action out of 0, feature 1 nowhere.
        MdpBuilder::new(3, 2, 2)
            .edge(0, 0, 1, &[1.0, 0.0])
            .edge(0, 1, 2, &[1.0, 0.0])
            .edge(1, 0, 1, &[0.0, 0.0])
            .edge(2, 0, 2, &[0.0, 0.0])
            .start(0)
            .horizon(3)
            .build()
            .unwrap()
    }

    #[test]
    fn always_and_never_accrued() {
        let mdp = branching();
        let map = AugmentedFeatureMap::new(&mdp);
        let (pol, _) = backward_pass(&mdp).unwrap();
        let hist = feature_accrual_history(&mdp, &map, &pol).unwrap();
        assert_eq!(hist.column(1)[0], 1.0);
        for t in 1..=3 {
            assert_eq!(hist.column(t)[1], 0.0);
        }
        assert_eq!(hist.eliminated_mass(&map, MinimalConstraint::feature(1)).unwrap(), 0.0);
        assert_eq!(hist.eliminated_mass(&map, MinimalConstraint::state(0)).unwrap(), 1.0);
        assert!((hist.eliminated_mass(&map, MinimalConstraint::state(1)).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            hist.eliminated_mass(&map, MinimalConstraint::action(5)),
            Err(AccrualError::IndexOutOfRange(_))
        ));
    }

    #[test]
    fn repeated_accrual_counted_once() {
        let mdp = branching();
        let map = AugmentedFeatureMap::new(&mdp);
        let (pol, _) = backward_pass(&mdp).unwrap();
        let hist = feature_accrual_history(&mdp, &map, &pol).unwrap();
        // action 0 is taken at every step on the 0->1 branch and later on both
        let a0 = map.index_of(MinimalConstraint::action(0));
        assert!((hist.final_column()[a0] - 1.0).abs() < 1e-15);
        let visits = state_action_visitation(&mdp, &pol).unwrap();
        let expected_count: f64 = (0..3).map(|t| (0..3).map(|s| visits[(t * 3 + s) * 2]).sum::<f64>()).sum();
        assert!(expected_count > 2.0);
    }

    #[test]
    fn horizon_mismatch() {
        let mdp = branching();
        let (pol, _) = backward_pass(&mdp).unwrap();
        let longer = mdp.with_horizon(4);
        let map = AugmentedFeatureMap::new(&mdp);
        assert!(matches!(
            feature_accrual_history(&longer, &map, &pol),
            Err(AccrualError::HorizonMismatch { policy: 3, mdp: 4 })
        ));
    }

    #[test]
    fn singleton_compound_matches_minimal() {
        let mdp = branching();
        let map = AugmentedFeatureMap::new(&mdp);
        let (pol, _) = backward_pass(&mdp).unwrap();
        let hist = feature_accrual_history(&mdp, &map, &pol).unwrap();
        for c in map.constraints() {
            let single = eliminated_mass_compound(&mdp, &pol, &ConstraintSet::from_minimal([c])).unwrap();
            assert!((single - hist.eliminated_mass(&map, c).unwrap()).abs() < 1e-15);
        }
    }
}
