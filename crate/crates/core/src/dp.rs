//! Dynamic programming over a (distance, speed) grid.
//!
//! Backward induction stores the cost-to-go for every stage; successor values
//! are interpolated bilinearly. The policy is then rolled forward from the
//! exact start state, and the resulting trajectory is scored with the true
//! objective.

use serde::{Deserialize, Serialize};

use crate::error::DpError;
use crate::kinematics::{rollout, Trajectory};
use crate::metrics::window_metrics;
use crate::powertrain::{trajectory_fuel, Powertrain};
use crate::scenario::{JerkMode, Scenario};
use crate::scp::{evaluate_true_objective, ObjectiveBreakdown};
use crate::signals::{turn_speed_limits, TurnLimits};

/// Cost assigned to infeasible states.
pub const BIG: f64 = 1e12;

fn infeasible(v: f64) -> bool {
    v >= 0.5 * BIG
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpGrid {
    pub distance_step: f64,
    /// Distance nodes: the uniform points plus both edges of every stop-line
    /// band, so no cell straddles a stop line.
    pub distance_nodes: Vec<f64>,
    /// Speed spacing, snapped so the speed limit is a grid point.
    pub speed_step: f64,
    pub speed_points: usize,
    /// Acceleration actions, spaced so one step moves a whole number of
    /// speed cells.
    pub actions: Vec<f64>,
    pub stages: usize,
    pub dt: f64,
    pub jerk_mode: JerkMode,
}

impl DpGrid {
    pub fn from_scenario(s: &Scenario) -> Self {
        let h = &s.horizon;
        let cfg = &s.dp;
        let intervals = ((h.speed_limit / cfg.speed_step) - 1e-9).ceil().max(1.0) as usize;
        let d_max = h.speed_limit * h.duration + cfg.distance_margin;
        let speed_step = h.speed_limit / intervals as f64;
        // actions move grid speeds to grid speeds
        let per_step = (cfg.accel_step * h.time_step / speed_step).round().max(1.0);
        let accel_step = per_step * speed_step / h.time_step;
        let lo = (h.accel_min / accel_step - 1e-9).ceil() as i64;
        let hi = (h.accel_max / accel_step + 1e-9).floor() as i64;
        let eps = s.solver.crossing_margin;
        let uniform = (d_max / cfg.distance_step).ceil() as usize + 1;
        let mut nodes: Vec<f64> = (0..uniform).map(|i| i as f64 * cfg.distance_step).collect();
        for int in &s.intersections {
            nodes.extend([int.position - eps, int.position + eps]);
        }
        nodes.sort_by(f64::total_cmp);
        nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        Self {
            distance_step: cfg.distance_step,
            distance_nodes: nodes,
            speed_step,
            speed_points: intervals + 1,
            actions: (lo..=hi).map(|k| k as f64 * accel_step).collect(),
            stages: h.steps(),
            dt: h.time_step,
            jerk_mode: cfg.jerk_mode,
        }
    }

    pub fn distance_points(&self) -> usize {
        self.distance_nodes.len()
    }

    pub fn speed(&self, j: usize) -> f64 {
        j as f64 * self.speed_step
    }

    pub fn distance(&self, i: usize) -> f64 {
        self.distance_nodes[i]
    }

    fn layer(&self) -> usize {
        let base = self.distance_points() * self.speed_points;
        match self.jerk_mode {
            JerkMode::Drop => base,
            JerkMode::Augment => base * self.actions.len(),
        }
    }

    /// Size of the stored cost-to-go tables.
    pub fn memory_estimate_mib(&self) -> f64 {
        ((self.stages + 1) * self.layer() * std::mem::size_of::<f64>()) as f64 / (1024.0 * 1024.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpSolution {
    pub trajectory: Trajectory,
    /// True objective of the rolled-out trajectory on [`comparison_scenario`].
    pub objective: ObjectiveBreakdown,
    /// Cost-to-go at the start state.
    pub value: f64,
    pub grid: DpGrid,
}

/// The scenario both engines are scored on: without the jerk term when the
/// grid drops it.
pub fn comparison_scenario(s: &Scenario) -> Scenario {
    let mut c = s.clone();
    if s.dp.jerk_mode == JerkMode::Drop {
        c.weights.jerk = 0.0;
    }
    c
}

struct Model<'a> {
    s: &'a Scenario,
    pt: Powertrain<'a>,
    limits: Vec<Option<TurnLimits>>,
    jerk: (f64, f64),
    augment: bool,
}

/// Outcome of one transition.
struct Step {
    d: f64,
    v: f64,
    cost: f64,
    torque: f64,
}

impl<'a> Model<'a> {
    fn new(s: &'a Scenario) -> Self {
        Self {
            s,
            pt: Powertrain::new(s),
            limits: s
                .intersections
                .iter()
                .map(|i| i.turn.as_ref().map(turn_speed_limits))
                .collect(),
            jerk: s.horizon.jerk_step_bounds(),
            augment: s.dp.jerk_mode == JerkMode::Augment,
        }
    }

    /// Whether motion from `d0` to `d1` during `[t0, t0 + dt]` keeps the
    /// passage through every stop-line band inside a green window.
    fn green_ok(&self, t0: f64, d0: f64, d1: f64) -> bool {
        let h = &self.s.horizon;
        let eps = self.s.solver.crossing_margin;
        let dt = h.time_step;
        for int in &self.s.intersections {
            let (lo, hi) = (int.position - eps, int.position + eps);
            if d1 < lo || d0 > hi {
                continue;
            }
            let (th_in, th_out) = if d1 > d0 {
                (
                    ((lo - d0) / (d1 - d0)).clamp(0.0, 1.0),
                    ((hi - d0) / (d1 - d0)).clamp(0.0, 1.0),
                )
            } else {
                (0.0, 1.0)
            };
            let (t_in, t_out) = (t0 + th_in * dt, t0 + th_out * dt);
            let ok = int
                .windows
                .iter()
                .any(|w| w.t_r2g <= t_in + 1e-9 && t_out <= w.t_g2r.min(h.duration) + 1e-9);
            if !ok {
                return false;
            }
        }
        true
    }

    fn turn_penalty(&self, d0: f64, d1: f64, v0: f64, v1: f64, a: f64) -> f64 {
        let slope = self.s.solver.soft_slope;
        let mut pen = 0.0;
        for (int, lim) in self.s.intersections.iter().zip(&self.limits) {
            let Some(l) = lim else { continue };
            let x = int.position;
            if d0 < x && x <= d1 {
                let frac = (x - d0) / (d1 - d0);
                let vc = v0 + frac * (v1 - v0);
                // the crossing acceleration is taken as this step's action
                pen += slope * ((vc - l.v_turn).max(0.0) + (a - l.a_max).max(0.0) + (l.a_min - a).max(0.0));
            }
        }
        pen
    }

    /// Speed, position-independent cost and torque of one transition.
    fn motion(&self, v: f64, a: f64, a_prev: f64, torque_prev: f64) -> Option<(f64, f64, f64)> {
        let h = &self.s.horizon;
        let w = &self.s.weights;
        let dt = h.time_step;
        if self.augment {
            let j = a - a_prev;
            if j < self.jerk.0 - 1e-9 || j > self.jerk.1 + 1e-9 {
                return None;
            }
        }
        let v1 = v + a * dt;
        if v1 < -1e-9 || v1 > h.speed_limit + 1e-9 {
            return None;
        }
        let v1 = v1.clamp(0.0, h.speed_limit);
        let sample = self.pt.sample(self.pt.traction_power(v1, a), torque_prev, dt);
        let mut comfort = a * a;
        if self.augment {
            comfort += w.jerk * (a - a_prev).powi(2);
        }
        let cost = w.fuel * sample.fuel_rate * dt - w.time / h.steps() as f64 * v1 + w.comfort * comfort;
        Some((v1, cost, sample.torque))
    }

    /// Completes a transition from `motion` at position `d` and stage `k`.
    fn place(&self, k: usize, d: f64, v: f64, a: f64, (v1, cost, torque): (f64, f64, f64)) -> Option<Step> {
        let d1 = d + 0.5 * (v + v1) * self.s.horizon.time_step;
        if !self.green_ok(k as f64 * self.s.horizon.time_step, d, d1) {
            return None;
        }
        Some(Step {
            d: d1,
            v: v1,
            cost: cost + self.turn_penalty(d, d1, v, v1, a),
            torque,
        })
    }

    fn step(&self, k: usize, d: f64, v: f64, a: f64, a_prev: f64, torque_prev: f64) -> Option<Step> {
        let m = self.motion(v, a, a_prev, torque_prev)?;
        self.place(k, d, v, a, m)
    }

    fn terminal(&self, d: f64) -> f64 {
        let need = self
            .s
            .intersections
            .last()
            .map_or(f64::NEG_INFINITY, |i| i.position + self.s.solver.crossing_margin);
        if d >= need - 1e-9 {
            0.0
        } else {
            BIG
        }
    }
}

/// Bilinear interpolation of one layer; any infeasible corner with positive
/// weight makes the result infeasible.
fn interpolate(grid: &DpGrid, layer: &[f64], d: f64, v: f64, p: usize, n_p: usize) -> f64 {
    let nodes = &grid.distance_nodes;
    let i0 = nodes.partition_point(|&x| x <= d).saturating_sub(1);
    let wd = if i0 + 1 < nodes.len() {
        ((d - nodes[i0]) / (nodes[i0 + 1] - nodes[i0])).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let fv = (v / grid.speed_step).max(0.0);
    let j0 = (fv.floor() as usize).min(grid.speed_points - 1);
    let wv = if j0 + 1 < grid.speed_points {
        fv - j0 as f64
    } else {
        0.0
    };
    let at = |i: usize, j: usize| layer[(i * grid.speed_points + j) * n_p + p];
    let mut acc = 0.0;
    for (di, wi) in [(0usize, 1.0 - wd), (1, wd)] {
        if wi <= 1e-12 {
            continue;
        }
        for (dj, wj) in [(0usize, 1.0 - wv), (1, wv)] {
            if wj <= 1e-12 {
                continue;
            }
            let val = at(i0 + di, j0 + dj);
            if infeasible(val) {
                return BIG;
            }
            acc += wi * wj * val;
        }
    }
    acc
}

fn action_index(actions: &[f64], a: f64) -> Option<usize> {
    actions.iter().position(|&x| (x - a).abs() < 1e-9)
}

/// Solve the scenario on its configured grid.
pub fn dp_solve(s: &Scenario) -> Result<DpSolution, DpError> {
    dp_solve_on(s, &DpGrid::from_scenario(s))
}

pub fn dp_solve_on(s: &Scenario, grid: &DpGrid) -> Result<DpSolution, DpError> {
    let h = &s.horizon;
    if s.fuel_curve.transient_coefficient != 0.0 && grid.jerk_mode == JerkMode::Drop {
        return Err(DpError::Unsupported(
            "the transient fuel term needs the previous acceleration in the state (jerk_mode = augment)".into(),
        ));
    }
    let j0 = h.initial_speed / grid.speed_step;
    if (j0 - j0.round()).abs() > 1e-9 {
        return Err(DpError::InitialStateOffGrid(h.initial_speed));
    }
    let est = grid.memory_estimate_mib();
    if est > s.dp.memory_cap_mib {
        return Err(DpError::MemoryCap {
            estimate_mib: est,
            cap_mib: s.dp.memory_cap_mib,
        });
    }
    let model = Model::new(s);
    let augment = model.augment;
    let n_a = grid.actions.len();
    let n_p = if augment { n_a } else { 1 };
    let p_init = if augment {
        action_index(&grid.actions, h.initial_accel)
            .ok_or_else(|| DpError::Unsupported(format!("initial acceleration {} is not an action", h.initial_accel)))?
    } else {
        0
    };
    let layer = grid.layer();
    let n = grid.stages;
    let dt = grid.dt;
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut term = vec![BIG; layer];
    for i in 0..grid.distance_points() {
        let t = model.terminal(grid.distance(i));
        for j in 0..grid.speed_points {
            for p in 0..n_p {
                term[(i * grid.speed_points + j) * n_p + p] = t;
            }
        }
    }
    values.push(term);
    // transitions from grid speeds do not depend on position or stage
    let mut moves = Vec::with_capacity(grid.speed_points * n_p * n_a);
    for j in 0..grid.speed_points {
        let v = grid.speed(j);
        for p in 0..n_p {
            let a_prev = if augment { grid.actions[p] } else { 0.0 };
            let torque_prev = if augment { model.pt.torque_at(v, a_prev) } else { 0.0 };
            for &a in &grid.actions {
                moves.push(model.motion(v, a, a_prev, torque_prev));
            }
        }
    }
    for k in (0..n).rev() {
        let next = values.last().expect("terminal layer");
        let mut cur = vec![BIG; layer];
        // reachable region plus the first node beyond it, so interpolation at
        // its edge sees computed values
        let d_reach = h.speed_limit * k as f64 * dt + 1e-9;
        let v_reach = h.initial_speed + h.accel_max * k as f64 * dt + grid.speed_step + 1e-9;
        for i in 0..grid.distance_points() {
            let d = grid.distance(i);
            if i > 0 && grid.distance(i - 1) > d_reach {
                break;
            }
            for j in 0..grid.speed_points {
                let v = grid.speed(j);
                if v > v_reach {
                    break;
                }
                for p in 0..n_p {
                    let mut best = BIG;
                    for (ai, &a) in grid.actions.iter().enumerate() {
                        let Some(m) = moves[(j * n_p + p) * n_a + ai] else {
                            continue;
                        };
                        let Some(st) = model.place(k, d, v, a, m) else {
                            continue;
                        };
                        let pn = if augment { ai } else { 0 };
                        let tail = interpolate(grid, next, st.d, st.v, pn, n_p);
                        if infeasible(tail) {
                            continue;
                        }
                        best = best.min(st.cost + tail);
                    }
                    cur[(i * grid.speed_points + j) * n_p + p] = best;
                }
            }
        }
        values.push(cur);
    }
    values.reverse();

    let value = values[0][(j0.round() as usize) * n_p + p_init];
    if infeasible(value) {
        return Err(DpError::NoFeasiblePath);
    }
    // forward pass from the exact start state
    let (mut d, mut v) = (0.0, h.initial_speed);
    let mut a_prev = h.initial_accel;
    let mut torque_prev = if augment { model.pt.torque_at(v, a_prev) } else { 0.0 };
    let mut actions = Vec::with_capacity(n);
    for k in 0..n {
        let mut best: Option<(f64, usize, Step)> = None;
        for (ai, &a) in grid.actions.iter().enumerate() {
            let Some(st) = model.step(k, d, v, a, a_prev, torque_prev) else {
                continue;
            };
            let pn = if augment { ai } else { 0 };
            let tail = interpolate(grid, &values[k + 1], st.d, st.v, pn, n_p);
            if infeasible(tail) {
                continue;
            }
            let total = st.cost + tail;
            if best.as_ref().is_none_or(|b| total < b.0) {
                best = Some((total, ai, st));
            }
        }
        let (_, ai, st) = best.ok_or(DpError::NoFeasiblePath)?;
        actions.push(grid.actions[ai]);
        a_prev = grid.actions[ai];
        torque_prev = if augment { st.torque } else { 0.0 };
        d = st.d;
        v = st.v;
    }
    let trajectory = rollout(h.initial_speed, &actions, dt)?;
    let objective = evaluate_true_objective(&trajectory, &comparison_scenario(s));
    Ok(DpSolution {
        trajectory,
        objective,
        value,
        grid: grid.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuelWaitPoint {
    pub offset: f64,
    pub wait: f64,
    pub fuel: f64,
}

/// Wait time and window fuel at the first intersection for each signal
/// offset, solved by DP.
pub fn fuel_wait_curve(s: &Scenario, offsets: &[f64]) -> Result<Vec<FuelWaitPoint>, DpError> {
    offsets
        .iter()
        .map(|&offset| {
            let shifted = s.with_signal_offset(offset);
            let sol = dp_solve(&shifted)?;
            let pt = Powertrain::new(&shifted);
            let fuel = trajectory_fuel(&sol.trajectory, &pt, shifted.horizon.initial_accel);
            let x = shifted.intersections.first().map_or(0.0, |i| i.position);
            let w = window_metrics(&sol.trajectory, &fuel, x, shifted.horizon.initial_speed);
            Ok(FuelWaitPoint {
                offset,
                wait: w.wait,
                fuel: w.fuel,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::GreenWindow;
    use crate::testkit::golden;

    fn toy() -> Scenario {
        let mut s = golden::single_intersection();
        s.horizon.duration = 3.0;
        s.horizon.initial_speed = 1.0;
        s.horizon.speed_limit = 2.0;
        s.horizon.accel_min = -1.0;
        s.horizon.accel_max = 1.0;
        s.dp.distance_step = 0.5;
        s.dp.speed_step = 1.0;
        s.dp.accel_step = 1.0;
        s.dp.distance_margin = 0.0;
        s.intersections[0].position = 2.3;
        s.intersections[0].windows = vec![GreenWindow::new(1.0, 10.0)];
        s
    }

    #[test]
    fn grid_shape() {
        let g = DpGrid::from_scenario(&golden::single_intersection());
        assert_eq!(g.speed_points, 73);
        assert_eq!(g.actions.len(), 25);
        assert!(g.actions.contains(&0.0));
        assert!((g.speed(72) - 17.88).abs() < 1e-12);
    }

    #[test]
    fn off_grid_start_rejected() {
        let mut s = toy();
        s.horizon.initial_speed = 0.5;
        assert!(matches!(dp_solve(&s), Err(DpError::InitialStateOffGrid(_))));
    }

    #[test]
    fn transient_needs_augmented_state() {
        let mut s = toy();
        s.fuel_curve.transient_coefficient = 0.01;
        assert!(matches!(dp_solve(&s), Err(DpError::Unsupported(_))));
        s.dp.jerk_mode = JerkMode::Augment;
        assert!(dp_solve(&s).is_ok());
    }

    #[test]
    fn memory_cap_enforced() {
        let mut s = golden::single_intersection();
        s.dp.memory_cap_mib = 1.0;
        assert!(matches!(dp_solve(&s), Err(DpError::MemoryCap { .. })));
    }

    #[test]
    fn toy_value_matches_rollout() {
        // on an exact grid the stored value equals the scored trajectory
        let s = toy();
        let sol = dp_solve(&s).unwrap();
        assert!(
            (sol.value - sol.objective.total).abs() < 1e-9,
            "{} {}",
            sol.value,
            sol.objective.total
        );
    }
}
