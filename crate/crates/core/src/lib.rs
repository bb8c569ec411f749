//! Speed trajectory planning through signalized intersections.
//!
//! The planner picks one green window per intersection and optimizes the
//! acceleration sequence for that choice by sequential convex programming.
//! A dynamic-programming solver and a rule-based human driver serve as
//! references.

#![allow(clippy::needless_range_loop)]

pub mod dp;
pub mod driver;
pub mod error;
pub mod kinematics;
pub mod metrics;
pub mod powertrain;
pub mod qp;
pub mod scenario;
pub mod scp;
pub mod search;
pub mod signals;
pub mod testkit;

pub use dp::{dp_solve, DpGrid, DpSolution};
pub use driver::{simulate_driver, DriverParams};
pub use error::{DpError, Error, KinematicsError, PlanError, ScenarioError};
pub use kinematics::{rollout, CrossingRecord, Trajectory};
pub use metrics::{run_metrics, RunMetrics, WindowMetrics};
pub use powertrain::{trajectory_fuel, FuelTrace, PowerSample, Powertrain};
pub use scenario::{
    load_scenario, parse_scenario, validate_scenario, BsfcLine, DpSettings, FuelCurve, GreenWindow, Horizon,
    Intersection, JerkMode, Scenario, ScpConfig, TurnSpec, VehicleParams, Violation, Weights,
};
pub use scp::{evaluate_true_objective, solve_fixed_window, ObjectiveBreakdown, SolveResult, Termination};
pub use search::{search, SearchLog, SearchOutcome};
pub use signals::{turn_speed_limits, TurnLimits, WindowSelection};
