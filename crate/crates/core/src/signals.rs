//! Green-window bookkeeping, crossing validity and turning limits.

use serde::{Deserialize, Serialize};

use crate::kinematics::Trajectory;
use crate::powertrain::GRAVITY;
use crate::scenario::{GreenWindow, Horizon, Intersection, TurnSpec};

/// Speed and acceleration limits for a turning movement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnLimits {
    pub v_safe: f64,
    pub v_comfort: f64,
    pub v_turn: f64,
    pub a_min: f64,
    pub a_max: f64,
}

pub fn turn_speed_limits(turn: &TurnSpec) -> TurnLimits {
    let v_safe = (turn.radius * GRAVITY * turn.friction).sqrt();
    let v_comfort = (turn.radius * turn.lateral_accel).sqrt();
    TurnLimits {
        v_safe,
        v_comfort,
        v_turn: v_safe.min(v_comfort),
        a_min: turn.accel_min,
        a_max: turn.accel_max,
    }
}

/// One chosen window index per intersection.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WindowSelection(pub Vec<usize>);

impl WindowSelection {
    /// Singleton indicator vectors, one per intersection.
    pub fn indicators(&self, intersections: &[Intersection]) -> Vec<Vec<u8>> {
        self.0
            .iter()
            .zip(intersections)
            .map(|(&i, int)| (0..int.windows.len()).map(|j| u8::from(j == i)).collect())
            .collect()
    }

    pub fn windows<'a>(&self, intersections: &'a [Intersection]) -> Vec<&'a GreenWindow> {
        self.0
            .iter()
            .zip(intersections)
            .map(|(&i, int)| &int.windows[i])
            .collect()
    }

    /// Check the selection addresses an existing window everywhere.
    pub fn check(&self, intersections: &[Intersection]) -> Result<(), String> {
        if self.0.len() != intersections.len() {
            return Err(format!(
                "selection has {} entries for {} intersections",
                self.0.len(),
                intersections.len()
            ));
        }
        for (m, (&i, int)) in self.0.iter().zip(intersections).enumerate() {
            if i >= int.windows.len() {
                return Err(format!("intersection {m} has no window {i}"));
            }
        }
        Ok(())
    }
}

/// Vehicle position relative to an intersection at each window's critical
/// instants (negative: upstream).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalTimes {
    pub d_r2g: Vec<f64>,
    pub d_g2r: Vec<f64>,
}

pub fn critical_positions(traj: &Trajectory, int: &Intersection) -> CriticalTimes {
    let (d_r2g, d_g2r) = int
        .windows
        .iter()
        .map(|w| {
            (
                traj.position_at(w.t_r2g) - int.position,
                traj.position_at(w.t_g2r) - int.position,
            )
        })
        .unzip();
    CriticalTimes { d_r2g, d_g2r }
}

/// Signed clearances for one intersection: both positive when the crossing
/// happens inside the selected window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingMargin {
    /// Distance still upstream of the stop line when the window opens.
    pub before_open: f64,
    /// Distance past the stop line when the window closes (or the horizon
    /// ends).
    pub after_close: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingCheck {
    pub valid: bool,
    pub margins: Vec<CrossingMargin>,
}

pub fn crossing_margins(
    traj: &Trajectory,
    sel: &WindowSelection,
    intersections: &[Intersection],
) -> Vec<CrossingMargin> {
    sel.0
        .iter()
        .zip(intersections)
        .map(|(&i, int)| {
            let w = &int.windows[i];
            CrossingMargin {
                before_open: int.position - traj.position_at(w.t_r2g),
                after_close: traj.position_at(w.t_g2r) - int.position,
            }
        })
        .collect()
}

/// Strict crossing validity.
pub fn crossing_valid(traj: &Trajectory, sel: &WindowSelection, intersections: &[Intersection]) -> CrossingCheck {
    let margins = crossing_margins(traj, sel, intersections);
    let valid = margins.iter().all(|m| m.before_open > 0.0 && m.after_close > 0.0);
    CrossingCheck { valid, margins }
}

/// Validity with clearances of at least `margin`, up to `tol`.
pub fn crossing_valid_with_margin(
    traj: &Trajectory,
    sel: &WindowSelection,
    intersections: &[Intersection],
    margin: f64,
    tol: f64,
) -> CrossingCheck {
    let margins = crossing_margins(traj, sel, intersections);
    let valid = margins
        .iter()
        .all(|m| m.before_open >= margin - tol && m.after_close >= margin - tol);
    CrossingCheck { valid, margins }
}

/// Earliest time to cover `x` metres from speed `v0` under full throttle to
/// the speed limit.
pub fn earliest_arrival(x: f64, v0: f64, v_max: f64, a_max: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let t1 = (v_max - v0).max(0.0) / a_max;
    let s1 = 0.5 * (v0 + v_max) * t1;
    if x <= s1 {
        (-v0 + (v0 * v0 + 2.0 * a_max * x).sqrt()) / a_max
    } else {
        t1 + (x - s1) / v_max
    }
}

/// Latest time at which the vehicle can still be short of `x` under full
/// braking; infinite when it can stop before `x`.
pub fn latest_arrival(x: f64, v0: f64, a_min: f64) -> f64 {
    let stop = v0 * v0 / (2.0 * -a_min);
    if stop < x {
        f64::INFINITY
    } else {
        let b = -a_min;
        (v0 - (v0 * v0 - 2.0 * b * x).max(0.0).sqrt()) / b
    }
}

/// Indices of windows not ruled out by kinematic bounds from the start state.
/// `margin` is the clearance demanded on either side of the stop line.
pub fn reachable_windows(int: &Intersection, horizon: &Horizon, margin: f64) -> Vec<usize> {
    let t_end = horizon.duration;
    let earliest = earliest_arrival(
        int.position + margin,
        horizon.initial_speed,
        horizon.speed_limit,
        horizon.accel_max,
    );
    let latest = latest_arrival(int.position - margin, horizon.initial_speed, horizon.accel_min);
    int.windows
        .iter()
        .enumerate()
        .filter(|(_, w)| w.t_r2g < t_end && earliest <= w.t_g2r.min(t_end) && w.t_r2g <= latest)
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::rollout;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn turn(radius: f64) -> TurnSpec {
        TurnSpec {
            radius,
            friction: 0.7,
            lateral_accel: 3.0,
            accel_min: 0.0,
            accel_max: 0.0,
        }
    }

    fn int(position: f64, windows: &[(f64, f64)]) -> Intersection {
        Intersection {
            position,
            windows: windows.iter().map(|&(a, b)| GreenWindow::new(a, b)).collect(),
            turn: None,
        }
    }

    #[test]
    fn turn_limits() {
        let l = turn_speed_limits(&turn(25.0));
        assert!((l.v_safe - 13.1).abs() < 0.05, "{}", l.v_safe);
        assert!((l.v_comfort - 8.7).abs() < 0.05, "{}", l.v_comfort);
        assert_eq!(l.v_turn, l.v_comfort);
        let tiny = turn_speed_limits(&turn(1e-12));
        assert!(tiny.v_safe < 1e-5 && tiny.v_comfort < 1e-5);
    }

    #[test]
    fn parked_vehicle_never_valid() {
        let t = rollout(0.0, &[0.0; 30], 1.0).unwrap();
        let ints = [int(100.0, &[(5.0, 20.0)])];
        assert!(!crossing_valid(&t, &WindowSelection(vec![0]), &ints).valid);
    }

    #[test]
    fn cruise_inside_window_valid() {
        let t = rollout(10.0, &[0.0; 30], 1.0).unwrap();
        let ints = [int(100.0, &[(5.0, 20.0)])];
        let c = crossing_valid(&t, &WindowSelection(vec![0]), &ints);
        assert!(c.valid);
        assert_relative_eq!(c.margins[0].before_open, 50.0);
        assert_relative_eq!(c.margins[0].after_close, 100.0);
    }

    #[test]
    fn arrival_exactly_at_close_is_invalid() {
        // 10 m/s reaches 100 m at exactly t = 10
        let t = rollout(10.0, &[0.0; 30], 1.0).unwrap();
        let ints = [int(100.0, &[(5.0, 10.0)])];
        let c = crossing_valid(&t, &WindowSelection(vec![0]), &ints);
        assert_eq!(c.margins[0].after_close, 0.0);
        assert!(!c.valid);
    }

    #[test]
    fn earliest_arrival_closed_form() {
        // 0 -> 10 m/s at 2 m/s^2 takes 5 s over 25 m, then cruise
        assert_relative_eq!(earliest_arrival(25.0, 0.0, 10.0, 2.0), 5.0);
        assert_relative_eq!(earliest_arrival(125.0, 0.0, 10.0, 2.0), 15.0);
        assert_relative_eq!(earliest_arrival(9.0, 0.0, 10.0, 2.0), 3.0);
        assert!(latest_arrival(100.0, 10.0, -3.0).is_infinite());
        // 20 m/s braking at 2 m/s^2 cannot stop within 75 m: passes at t = 5
        assert_relative_eq!(latest_arrival(75.0, 20.0, -2.0), 5.0);
    }

    fn horizon(v0: f64) -> Horizon {
        Horizon {
            duration: 90.0,
            time_step: 1.0,
            initial_speed: v0,
            speed_limit: 17.88,
            accel_min: -3.0,
            accel_max: 3.0,
            jerk_min: -0.5,
            jerk_max: 0.5,
            initial_accel: 0.0,
        }
    }

    #[test]
    fn reachable_windows_prunes_early_and_late() {
        let i = int(400.0, &[(0.0, 15.0), (30.0, 60.0), (95.0, 120.0)]);
        // cruising at the limit reaches 400 m after 22.4 s
        assert_eq!(reachable_windows(&i, &horizon(17.88), 0.01), vec![1]);
        let i = int(400.0, &[(0.0, 25.0), (30.0, 60.0)]);
        assert_eq!(reachable_windows(&i, &horizon(17.88), 0.01), vec![0, 1]);
    }

    proptest! {
        #[test]
        fn valid_iff_crossing_inside_window(v0 in 2.0..15.0f64, a in proptest::collection::vec(-0.2..0.3f64, 60),
                                           x in 20.0..300.0f64, t0 in 0.0..40.0f64, len in 3.0..30.0f64) {
            let t = rollout(v0, &a, 1.0).unwrap();
            prop_assume!(t.v.iter().all(|&v| v > 0.1));
            let ints = [int(x, &[(t0, t0 + len)])];
            let chk = crossing_valid(&t, &WindowSelection(vec![0]), &ints);
            // the horizon end counts as a closing instant
            let inside = t
                .crossing(x)
                .is_some_and(|c| c.time > t0 && c.time < (t0 + len).min(t.duration()));
            prop_assert_eq!(chk.valid, inside);
        }
    }
}
