use mlci_core::gridworld::GridError;
use mlci_core::inference::InferenceError;
use mlci_core::io::IoError;
use mlci_core::maxent::SolverError;
use mlci_core::mdp::MdpError;
use thiserror::Error;

pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    /// Demonstrations or sampled trajectories that the model cannot produce.
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Input(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Input(_) => EXIT_INPUT,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<MdpError> for CliError {
    fn from(e: MdpError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::NoFeasibleTrajectory
            | SolverError::InfeasibleTrajectory(_)
            | SolverError::InfeasibleDemo { .. }
            | SolverError::DeadEnd { .. }
            | SolverError::Divergence { .. } => CliError::Infeasible(e.to_string()),
            SolverError::EmptyDemoSet | SolverError::HorizonMismatch { .. } => CliError::Input(e.to_string()),
        }
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::InfeasibleDemo { .. } => CliError::Infeasible(e.to_string()),
            InferenceError::InvalidArgument(m) => CliError::Usage(m),
            InferenceError::Solver(s) => s.into(),
            InferenceError::Mdp(m) => m.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::InfeasibleDemo { .. } => CliError::Infeasible(e.to_string()),
            GridError::Solver(s) => s.into(),
            GridError::Inference(i) => i.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}
