//! Fuel and delay measured around each intersection.
//!
//! The window for an intersection at `x` starts where the vehicle passes
//! `x - 300` m and ends once it is past `x + 300` m and back within 0.1 m/s of
//! the original cruise speed (or at the horizon end). The original speed is
//! the initial speed of the scenario, so a maneuver that starts before the
//! window opens is still measured against undisturbed travel.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::kinematics::Trajectory;
use crate::powertrain::{trajectory_fuel, FuelTrace, Powertrain};
use crate::scenario::Scenario;

pub const WINDOW_UPSTREAM: f64 = 300.0;
pub const WINDOW_DOWNSTREAM: f64 = 300.0;
pub const RECOVERY_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    pub start_time: f64,
    pub end_time: f64,
    pub distance: f64,
    /// Cruise speed the window is measured against.
    pub original_speed: f64,
    pub fuel: f64,
    pub travel_time: f64,
    /// Time the window distance takes at the original speed.
    pub free_flow_time: f64,
    pub wait: f64,
    pub crossing_speed: Option<f64>,
    /// False when the window was cut off by the horizon.
    pub recovered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Fuel over the whole horizon (g).
    pub total_fuel: f64,
    pub distance: f64,
    /// Sums over the intersection windows.
    pub fuel: f64,
    pub travel_time: f64,
    pub wait: f64,
    pub windows: Vec<WindowMetrics>,
}

/// Fuel (g) burned in `[t0, t1]` with per-step constant rates.
pub fn fuel_between(rates: &[f64], dt: f64, t0: f64, t1: f64) -> f64 {
    rates
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let a = (k as f64 * dt).max(t0);
            let b = ((k + 1) as f64 * dt).min(t1);
            r * (b - a).max(0.0)
        })
        .sum()
}

/// First instant at or after `t0` when the speed reaches `threshold`.
fn recovery_time(traj: &Trajectory, t0: f64, threshold: f64) -> Option<f64> {
    if traj.speed_at(t0) >= threshold {
        return Some(t0);
    }
    let dt = traj.dt;
    let first = (t0 / dt).floor() as usize;
    for k in first..traj.steps() {
        let (v0, v1) = (traj.v[k], traj.v[k + 1]);
        if v1 >= threshold {
            let frac = if v1 > v0 { (threshold - v0) / (v1 - v0) } else { 0.0 };
            return Some(((k as f64 + frac.clamp(0.0, 1.0)) * dt).max(t0));
        }
    }
    None
}

pub fn window_metrics(traj: &Trajectory, fuel: &FuelTrace, x: f64, original_speed: f64) -> WindowMetrics {
    let t_end = traj.duration();
    let start_time = if x <= WINDOW_UPSTREAM {
        0.0
    } else {
        traj.crossing(x - WINDOW_UPSTREAM).map_or(t_end, |c| c.time)
    };
    let (end_time, recovered) = match traj.crossing(x + WINDOW_DOWNSTREAM) {
        Some(c) => match recovery_time(traj, c.time, original_speed - RECOVERY_TOLERANCE) {
            Some(t) => (t, true),
            None => (t_end, false),
        },
        None => (t_end, false),
    };
    let distance = traj.position_at(end_time) - traj.position_at(start_time);
    let travel_time = end_time - start_time;
    let free_flow_time = if original_speed > 0.0 {
        distance / original_speed
    } else {
        f64::INFINITY
    };
    WindowMetrics {
        start_time,
        end_time,
        distance,
        original_speed,
        fuel: fuel_between(&fuel.rates(), traj.dt, start_time, end_time),
        travel_time,
        free_flow_time,
        wait: travel_time - free_flow_time,
        crossing_speed: traj.crossing(x).map(|c| c.speed),
        recovered,
    }
}

pub fn run_metrics(traj: &Trajectory, s: &Scenario) -> RunMetrics {
    let fuel = trajectory_fuel(traj, &Powertrain::new(s), s.horizon.initial_accel);
    let windows: Vec<WindowMetrics> = s
        .intersections
        .iter()
        .map(|i| window_metrics(traj, &fuel, i.position, s.horizon.initial_speed))
        .collect();
    RunMetrics {
        total_fuel: fuel.total_grams,
        distance: *traj.d.last().unwrap_or(&0.0),
        fuel: windows.iter().map(|w| w.fuel).sum(),
        travel_time: windows.iter().map(|w| w.travel_time).sum(),
        wait: windows.iter().map(|w| w.wait).sum(),
        windows,
    }
}

/// Percentage change of `value` relative to `reference`.
pub fn percent_delta(value: f64, reference: f64) -> f64 {
    100.0 * (value - reference) / reference
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    /// `y = c0 + c1 x + c2 x^2`.
    pub coefficients: [f64; 3],
    pub r_squared: f64,
}

/// Least-squares quadratic through `(x, y)`; `None` with fewer than three
/// distinct abscissae.
pub fn quadratic_fit(x: &[f64], y: &[f64]) -> Option<QuadraticFit> {
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for (&xi, &yi) in x.iter().zip(y) {
        let row = Vector3::new(1.0, xi, xi * xi);
        ata += row * row.transpose();
        aty += row * yi;
    }
    let c = ata.lu().solve(&aty)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| (yi - (c[0] + c[1] * xi + c[2] * xi * xi)).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Some(QuadraticFit {
        coefficients: [c[0], c[1], c[2]],
        r_squared,
    })
}
