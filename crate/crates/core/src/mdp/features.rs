use fixedbitset::FixedBitSet;

use super::constraint::{ConstraintKind, ConstraintSet, MinimalConstraint};
use super::trajectory::Trajectory;
use super::Mdp;

/// Binary indicators over `(s, a)` pairs.
///
/// Implementors list, for each pair, the indices of indicators equal to one.
pub trait IndicatorMap {
    fn n_indicators(&self) -> usize;
    fn active(&self, s: usize, a: usize) -> &[usize];
}

/// Indicator features: one per native feature (`φ_i > 0`), one per state and
/// one per action, laid out as `[features | states | actions]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedFeatureMap {
    n_features: usize,
    n_states: usize,
    n_actions: usize,
    /// Active indicator indices per pair, indexed `s * n_actions + a`, sorted.
    active: Vec<Vec<usize>>,
}

impl AugmentedFeatureMap {
    pub fn new(mdp: &Mdp) -> Self {
        let (k, n_s, n_a) = (mdp.n_features, mdp.n_states, mdp.n_actions);
        let mut active = Vec::with_capacity(n_s * n_a);
        for s in 0..n_s {
            for a in 0..n_a {
                let mut bits: Vec<usize> =
                    mdp.feature(s, a).iter().enumerate().filter(|(_, v)| **v > 0.0).map(|(i, _)| i).collect();
                bits.push(k + s);
                bits.push(k + n_s + a);
                active.push(bits);
            }
        }
        Self { n_features: k, n_states: n_s, n_actions: n_a, active }
    }

    /// `n_φ = k + |S| + |A|`.
    pub fn n_phi(&self) -> usize {
        self.n_features + self.n_states + self.n_actions
    }

    pub fn indicator(&self, s: usize, a: usize, i: usize) -> bool {
        self.active[s * self.n_actions + a].binary_search(&i).is_ok()
    }

    pub fn index_of(&self, c: MinimalConstraint) -> usize {
        match c.kind {
            ConstraintKind::Feature => c.index,
            ConstraintKind::State => self.n_features + c.index,
            ConstraintKind::Action => self.n_features + self.n_states + c.index,
        }
    }

    /// Inverse of [`AugmentedFeatureMap::index_of`]; `None` past `n_φ`.
    pub fn constraint_at(&self, i: usize) -> Option<MinimalConstraint> {
        let (k, n_s) = (self.n_features, self.n_states);
        if i < k {
            Some(MinimalConstraint::feature(i))
        } else if i < k + n_s {
            Some(MinimalConstraint::state(i - k))
        } else if i < self.n_phi() {
            Some(MinimalConstraint::action(i - k - n_s))
        } else {
            None
        }
    }

    /// Every minimal constraint, in canonical order.
    pub fn constraints(&self) -> impl Iterator<Item = MinimalConstraint> + '_ {
        (0..self.n_phi()).filter_map(|i| self.constraint_at(i))
    }
}

impl IndicatorMap for AugmentedFeatureMap {
    fn n_indicators(&self) -> usize {
        self.n_phi()
    }

    fn active(&self, s: usize, a: usize) -> &[usize] {
        &self.active[s * self.n_actions + a]
    }
}

/// A single indicator that is one on the union of a constraint set's
/// minimal constraints.
#[derive(Debug, Clone)]
pub struct UnionIndicator {
    n_actions: usize,
    member: Vec<bool>,
}

const ONE: [usize; 1] = [0];

impl UnionIndicator {
    pub fn new(mdp: &Mdp, c: &ConstraintSet) -> Self {
        let n_a = mdp.n_actions;
        let mut member = vec![false; mdp.n_states * n_a];
        for s in 0..mdp.n_states {
            for a in 0..n_a {
                member[s * n_a + a] = c.minimal().iter().any(|m| m.contains(mdp, s, a));
            }
        }
        Self { n_actions: n_a, member }
    }

    pub fn contains(&self, s: usize, a: usize) -> bool {
        self.member[s * self.n_actions + a]
    }
}

impl IndicatorMap for UnionIndicator {
    fn n_indicators(&self) -> usize {
        1
    }

    fn active(&self, s: usize, a: usize) -> &[usize] {
        if self.member[s * self.n_actions + a] {
            &ONE
        } else {
            &[]
        }
    }
}

/// Indicators accrued anywhere along the trajectory.
pub fn accrued_features<M: IndicatorMap + ?Sized>(map: &M, xi: &Trajectory) -> FixedBitSet {
    let mut bits = FixedBitSet::with_capacity(map.n_indicators());
    for (&s, &a) in xi.states.iter().zip(&xi.actions) {
        for &i in map.active(s, a) {
            bits.insert(i);
        }
    }
    bits
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::MdpBuilder;

    fn toy() -> Mdp {
        MdpBuilder::new(2, 2, 2)
            .edge(0, 0, 1, &[0.5, 0.0])
            .edge(0, 1, 0, &[0.0, 2.0])
            .edge(1, 0, 1, &[0.0, 0.0])
            .start(0)
            .horizon(2)
            .build()
            .unwrap()
    }

    #[test]
    fn layout_and_counts() {
        let map = AugmentedFeatureMap::new(&toy());
        assert_eq!(map.n_phi(), 2 + 2 + 2);
        // φ(0,0) = (0.5, 0): feature 0 on, state 0, action 0.
        assert_eq!(map.active(0, 0), &[0, 2, 4]);
        assert_eq!(map.active(0, 1), &[1, 2, 5]);
        for c in map.constraints() {
            assert_eq!(map.constraint_at(map.index_of(c)), Some(c));
        }
        assert_eq!(map.constraint_at(6), None);
    }

    #[test]
    fn accrual_is_idempotent() {
        let mdp = toy();
        let map = AugmentedFeatureMap::new(&mdp);
        let xi = Trajectory::new(vec![0, 0, 1], vec![1, 1]);
        let bits = accrued_features(&map, &xi);
        assert_eq!(bits.ones().collect::<Vec<_>>(), vec![1, 2, 5]);

        let single = Trajectory::new(vec![0, 1], vec![0]);
        let bits = accrued_features(&map, &single);
        assert_eq!(bits.ones().collect::<Vec<_>>(), map.active(0, 0).to_vec());
    }

    #[test]
    fn nine_by_nine_map() {
        // k = 2 native features on an 81-state, 8-action grid.
        let mut b = MdpBuilder::new(81, 8, 2).start(0).horizon(1);
        for s in 0..81 {
            b = b.edge(s, 0, s, &[1.0, 0.0]);
        }
        let map = AugmentedFeatureMap::new(&b.build().unwrap());
        assert_eq!(map.n_phi(), 91);
    }
}
