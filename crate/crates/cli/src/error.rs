use greenwave_core::{DpError, PlanError, ScenarioError, Violation};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Internal(String),
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Scenario(_) | CliError::Usage(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Internal(_) | CliError::Output { .. } => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Scenario(ScenarioError::Io { .. }) => "unreadable_scenario",
            CliError::Scenario(_) => "validation",
            CliError::Usage(_) => "usage",
            CliError::Infeasible(_) => "infeasible",
            CliError::Internal(_) => "internal",
            CliError::Output { .. } => "output",
        }
    }

    /// One-line JSON document describing the failure.
    pub fn to_json(&self) -> String {
        let violations = match self {
            CliError::Scenario(ScenarioError::Validation(v)) => v.clone(),
            CliError::Scenario(ScenarioError::Schema { field, message }) => vec![Violation {
                field: field.clone(),
                message: message.clone(),
            }],
            _ => Vec::new(),
        };
        let doc = ErrorDoc {
            error: self.kind(),
            exit_code: self.exit_code(),
            message: self.to_string(),
            violations,
        };
        serde_json::to_string(&doc).expect("error document serializes")
    }
}

#[derive(Serialize)]
struct ErrorDoc {
    error: &'static str,
    exit_code: i32,
    message: String,
    violations: Vec<Violation>,
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::Infeasible(_) | PlanError::GloballyInfeasible(_) => CliError::Infeasible(e.to_string()),
            PlanError::BadSelection(_) | PlanError::Kinematics(_) => CliError::Internal(e.to_string()),
        }
    }
}

impl From<DpError> for CliError {
    fn from(e: DpError) -> Self {
        match e {
            DpError::NoFeasiblePath => CliError::Infeasible(e.to_string()),
            DpError::InitialStateOffGrid(_) | DpError::MemoryCap { .. } | DpError::Unsupported(_) => {
                CliError::Usage(e.to_string())
            }
            DpError::Kinematics(_) => CliError::Internal(e.to_string()),
        }
    }
}
