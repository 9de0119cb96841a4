//! Maximum likelihood constraint inference for tabular MDPs.
//!
//! Given a nominal MDP and demonstrations from an agent that obeys unknown
//! hard constraints, the crate ranks candidate state, action and feature
//! constraints by how much demonstration likelihood they add under a
//! maximum entropy trajectory model, and grows a constraint set greedily
//! until the KL divergence between demonstrations and model stops dropping.
//!
//! * [`mdp`]: MDPs, augmented indicator features, constraints, trajectories.
//! * [`maxent`]: backward pass, likelihoods, KL, sampling, reward learning.
//! * [`accrual`]: forward feature-accrual history and eliminated mass.
//! * [`inference`]: candidate selection and greedy iterative inference.
//! * [`gridworld`]: synthetic grid worlds and experiment drivers.
//! * [`io`]: versioned JSON schemas, manifests, rendering and metrics.

pub mod accrual;
pub mod gridworld;
pub mod inference;
pub mod io;
pub mod maxent;
pub mod mdp;
pub mod numeric;
