use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IoError, RunManifest, Versioned};
use crate::accrual::AccrualHistory;
use crate::gridworld::GridWorld;
use crate::inference::InferenceResult;
use crate::maxent::{DemoSet, PartitionValue, RewardFit, TimeVaryingPolicy};
use crate::mdp::{ConstraintSet, GridLayout, Mdp, MdpBuilder, MinimalConstraint, Reward, Successor, Trajectory};

pub const MDP_SCHEMA: &str = "mlci-mdp/1";
pub const DEMOS_SCHEMA: &str = "mlci-demos/1";
pub const CONSTRAINTS_SCHEMA: &str = "mlci-constraints/1";
pub const RESULT_SCHEMA: &str = "mlci-result/1";
pub const POLICY_SCHEMA: &str = "mlci-policy/1";
pub const ACCRUAL_SCHEMA: &str = "mlci-accrual/1";
pub const WEIGHTS_SCHEMA: &str = "mlci-weights/1";

macro_rules! versioned {
    ($ty:ty, $schema:expr) => {
        impl Versioned for $ty {
            const SCHEMA: &'static str = $schema;
            fn schema_tag(&self) -> &str {
                &self.schema
            }
        }
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEntry {
    pub s: usize,
    pub a: usize,
    pub features: Vec<f64>,
    pub successors: Vec<Successor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
    pub n_states: usize,
    pub n_actions: usize,
    pub n_features: usize,
    pub horizon: usize,
    pub discount: f64,
    pub rationality: f64,
    pub initial_dist: Vec<f64>,
    pub reward: Reward,
    #[serde(default)]
    pub goal_states: Vec<usize>,
    pub feature_names: Vec<String>,
    pub action_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<GridLayout>,
    /// One entry per available `(s, a)`, in state then action order.
    pub transitions: Vec<TransitionEntry>,
}
versioned!(MdpFile, MDP_SCHEMA);

impl MdpFile {
    pub fn from_mdp(mdp: &Mdp, manifest: Option<RunManifest>) -> Self {
        Self {
            schema: MDP_SCHEMA.to_owned(),
            manifest,
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            n_features: mdp.n_features(),
            horizon: mdp.horizon(),
            discount: mdp.discount(),
            rationality: mdp.rationality(),
            initial_dist: mdp.initial_dist().to_vec(),
            reward: mdp.reward_spec().clone(),
            goal_states: mdp.goal_states().to_vec(),
            feature_names: mdp.feature_names().to_vec(),
            action_names: mdp.action_names().to_vec(),
            layout: mdp.layout(),
            transitions: mdp
                .available_pairs()
                .map(|(s, a)| TransitionEntry {
                    s,
                    a,
                    features: mdp.feature(s, a).to_vec(),
                    successors: mdp.successors(s, a).to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_mdp(&self, path: &Path) -> Result<Mdp, IoError> {
        let (n_s, n_a, k) = (self.n_states, self.n_actions, self.n_features);
        let mut b = MdpBuilder::new(n_s, n_a, k);
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.transitions {
            if e.s >= n_s || e.a >= n_a {
                return Err(IoError::schema(path, format!("transition ({}, {}) out of range", e.s, e.a)));
            }
            if e.features.len() != k {
                return Err(IoError::schema(
                    path,
                    format!("transition ({}, {}) has {} features, expected {k}", e.s, e.a, e.features.len()),
                ));
            }
            if !seen.insert((e.s, e.a)) {
                return Err(IoError::schema(path, format!("duplicate transition ({}, {})", e.s, e.a)));
            }
            b = b.action(e.s, e.a, e.successors.clone(), &e.features);
        }
        b = b
            .initial(self.initial_dist.clone())
            .horizon(self.horizon)
            .discount(self.discount)
            .rationality(self.rationality)
            .goal_states(self.goal_states.clone())
            .feature_names(self.feature_names.clone())
            .action_names(self.action_names.clone());
        b = match &self.reward {
            Reward::Linear(w) => b.reward_weights(w.clone()),
            Reward::Table(t) => b.reward_table(t.clone()),
        };
        if let Some(layout) = self.layout {
            b = b.layout(layout);
        }
        b.build().map_err(|e| IoError::schema(path, e.to_string()))
    }
}

/// A trajectory as state and action indices, or as a grid cell sequence to
/// be converted against a grid world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actions: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<[usize; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemosFile {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
    pub trajectories: Vec<DemoEntry>,
}
versioned!(DemosFile, DEMOS_SCHEMA);

impl DemosFile {
    pub fn from_demos(demos: &DemoSet, manifest: Option<RunManifest>) -> Self {
        Self {
            schema: DEMOS_SCHEMA.to_owned(),
            manifest,
            trajectories: demos
                .iter()
                .map(|xi| DemoEntry { states: Some(xi.states.clone()), actions: Some(xi.actions.clone()), cells: None })
                .collect(),
        }
    }

    /// Index-form trajectories; cell-form entries are rejected.
    pub fn to_demos(&self, path: &Path) -> Result<DemoSet, IoError> {
        let demos = self
            .trajectories
            .iter()
            .enumerate()
            .map(|(i, e)| match (&e.states, &e.actions, &e.cells) {
                (Some(s), Some(a), None) => Ok(Trajectory::new(s.clone(), a.clone())),
                (None, None, Some(_)) => {
                    Err(IoError::schema(path, format!("trajectory {i}: cell sequences need a grid config")))
                }
                _ => Err(IoError::schema(path, format!("trajectory {i}: give either states and actions, or cells"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        DemoSet::new(demos).map_err(|_| IoError::schema(path, "at least one trajectory is required"))
    }
}

/// Reads externally recorded demonstrations for `world`.
///
/// Entries may be index trajectories or cell sequences; cell sequences are
/// converted to king moves and padded with `stay` up to the horizon. Every
/// trajectory must be feasible on the nominal grid.
pub fn ingest_external_demos(path: &Path, world: &GridWorld) -> Result<DemoSet, crate::gridworld::GridError> {
    use crate::gridworld::GridError;
    let (file, _) = super::read_json::<DemosFile>(path).map_err(|e| GridError::Parse(e.to_string()))?;
    if file.trajectories.is_empty() {
        return Err(GridError::Parse(format!("{}: at least one trajectory is required", path.display())));
    }
    let mut demos = Vec::with_capacity(file.trajectories.len());
    for (index, e) in file.trajectories.iter().enumerate() {
        let xi = match (&e.states, &e.actions, &e.cells) {
            (Some(s), Some(a), None) => Trajectory::new(s.clone(), a.clone()),
            (None, None, Some(cells)) => {
                world.cells_to_trajectory(cells).map_err(|violation| GridError::InfeasibleDemo { index, violation })?
            }
            _ => {
                return Err(GridError::Parse(format!(
                    "{}: trajectory {index}: give either states and actions, or cells",
                    path.display()
                )))
            }
        };
        if let crate::mdp::Feasibility::Infeasible(violation) = crate::mdp::validate_trajectory(&world.nominal, &xi) {
            return Err(GridError::InfeasibleDemo { index, violation });
        }
        demos.push(xi);
    }
    Ok(DemoSet::new(demos)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintEntry {
    #[serde(flatten)]
    pub constraint: MinimalConstraint,
    /// Human-readable description; ignored on input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintsFile {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
    pub constraints: Vec<ConstraintEntry>,
}
versioned!(ConstraintsFile, CONSTRAINTS_SCHEMA);

fn labelled(mdp: &Mdp, c: MinimalConstraint) -> ConstraintEntry {
    ConstraintEntry { constraint: c, label: Some(c.describe(mdp)) }
}

impl ConstraintsFile {
    pub fn from_set(mdp: &Mdp, c: &ConstraintSet, manifest: Option<RunManifest>) -> Self {
        Self {
            schema: CONSTRAINTS_SCHEMA.to_owned(),
            manifest,
            constraints: c.minimal().iter().map(|&m| labelled(mdp, m)).collect(),
        }
    }

    /// Checks every constraint against `mdp`'s dimensions.
    pub fn to_set(&self, path: &Path, mdp: &Mdp) -> Result<ConstraintSet, IoError> {
        if let Some(bad) = self.constraints.iter().find(|e| !e.constraint.in_range(mdp)) {
            return Err(IoError::schema(path, format!("constraint {} out of range", bad.constraint)));
        }
        Ok(ConstraintSet::from_minimal(self.constraints.iter().map(|e| e.constraint)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultFile {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
    pub threshold: f64,
    /// Descriptions of the selected constraints, in selection order.
    pub labels: Vec<String>,
    pub result: InferenceResult,
}
versioned!(ResultFile, RESULT_SCHEMA);

impl ResultFile {
    pub fn new(mdp: &Mdp, threshold: f64, result: InferenceResult, manifest: Option<RunManifest>) -> Self {
        Self {
            schema: RESULT_SCHEMA.to_owned(),
            manifest,
            threshold,
            labels: result.selected.iter().map(|c| c.describe(mdp)).collect(),
            result,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyFile {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
    pub horizon: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub log_z: f64,
    pub initial_dist: Vec<f64>,
    /// `π(a | s, t)` as `[t][s][a]`.
    pub policy: Vec<Vec<Vec<f64>>>,
    /// `V_t(s)` as `[t][s]` for `t = 0..=T`; `null` where `−∞`.
    pub values: Vec<Vec<Option<f64>>>,
}
versioned!(PolicyFile, POLICY_SCHEMA);

impl PolicyFile {
    pub fn new(pol: &TimeVaryingPolicy, z: &PartitionValue, manifest: Option<RunManifest>) -> Self {
        let (n_s, n_a) = (pol.n_states(), pol.n_actions());
        Self {
            schema: POLICY_SCHEMA.to_owned(),
            manifest,
            horizon: pol.horizon(),
            n_states: n_s,
            n_actions: n_a,
            log_z: z.log_z,
            initial_dist: pol.initial_dist().to_vec(),
            policy: (0..pol.horizon())
                .map(|t| (0..n_s).map(|s| (0..n_a).map(|a| pol.prob(t, s, a)).collect()).collect())
                .collect(),
            values: (0..=z.horizon())
                .map(|t| (0..n_s).map(|s| Some(z.value(t, s)).filter(|v| v.is_finite())).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccrualFile {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
    pub n_features: usize,
    pub n_states: usize,
    pub n_actions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<GridLayout>,
    pub feature_names: Vec<String>,
    pub action_names: Vec<String>,
    /// `Φ̃_t` as `[t - 1][i]` for `t = 1..=T`.
    pub columns: Vec<Vec<f64>>,
    /// `D_{s,t}` as `[t][s]` for `t = 0..=T`.
    pub visitation: Vec<Vec<f64>>,
    /// Constraints to mark when rendering.
    #[serde(default)]
    pub marked: Vec<MinimalConstraint>,
}
versioned!(AccrualFile, ACCRUAL_SCHEMA);

impl AccrualFile {
    pub fn new(
        mdp: &Mdp,
        hist: &AccrualHistory,
        marked: Vec<MinimalConstraint>,
        manifest: Option<RunManifest>,
    ) -> Self {
        Self {
            schema: ACCRUAL_SCHEMA.to_owned(),
            manifest,
            n_features: mdp.n_features(),
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            layout: mdp.layout(),
            feature_names: mdp.feature_names().to_vec(),
            action_names: mdp.action_names().to_vec(),
            columns: (1..=hist.horizon()).map(|t| hist.column(t).to_vec()).collect(),
            visitation: (0..=hist.horizon())
                .map(|t| (0..hist.n_states()).map(|s| hist.visitation(t, s)).collect())
                .collect(),
            marked,
        }
    }

    /// `Φ̃_T`, or zeros when the horizon is zero.
    pub fn final_column(&self) -> Vec<f64> {
        self.columns.last().cloned().unwrap_or_else(|| vec![0.0; self.n_features + self.n_states + self.n_actions])
    }
}

/// Learned reward weights with the per-step convergence log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsFile {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    /// Mean demonstration log-likelihood before each step.
    pub log_likelihood: Vec<f64>,
    pub gradient_norm: Vec<f64>,
    /// True when the fit stopped early because the likelihood kept falling.
    pub diverged: bool,
}
versioned!(WeightsFile, WEIGHTS_SCHEMA);

impl WeightsFile {
    pub fn new(mdp: &Mdp, fit: &RewardFit, diverged: bool, manifest: Option<RunManifest>) -> Self {
        Self {
            schema: WEIGHTS_SCHEMA.to_owned(),
            manifest,
            feature_names: mdp.feature_names().to_vec(),
            weights: fit.weights.clone(),
            log_likelihood: fit.log_likelihood.clone(),
            gradient_norm: fit.gradient_norm.clone(),
            diverged,
        }
    }
}
