use thiserror::Error;

use crate::scenario::Violation;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("schema violation at `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("scenario failed validation:\n{}", list(.0))]
    Validation(Vec<Violation>),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

fn list(v: &[Violation]) -> String {
    v.iter().map(|x| format!("  - {x}")).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("rollout reaches negative speed {speed} at sample {sample}")]
    NegativeSpeed { sample: usize, speed: f64 },
    #[error("acceleration vector is empty")]
    Empty,
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("window selection is infeasible: {0}")]
    Infeasible(String),
    #[error("no feasible window combination; per-intersection reachable windows: {0:?}")]
    GloballyInfeasible(Vec<Vec<usize>>),
    #[error("invalid window selection: {0}")]
    BadSelection(String),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

#[derive(Debug, Error)]
pub enum DpError {
    #[error("initial speed {0} m/s is not a point of the speed grid")]
    InitialStateOffGrid(f64),
    #[error("grid needs about {estimate_mib:.0} MiB, above the {cap_mib:.0} MiB cap")]
    MemoryCap { estimate_mib: f64, cap_mib: f64 },
    #[error("{0}")]
    Unsupported(String),
    #[error("no feasible path through the grid")]
    NoFeasiblePath,
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// Crate-level error for orchestration code.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
