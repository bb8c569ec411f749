//! Sequential convex programming for a fixed window selection.
//!
//! Each subproblem substitutes `u_k = v0 + dt * sum_{i<=k} a_i` (the speed at
//! the end of step `k`) into the traction power and scales step `k` by the
//! ratio `fc_k / p_k` of the previous iterate. The kinetic term `M a_k u_k`
//! stays exact; aerodynamic drag is linearized as
//! `c (u_k^j + v_w) (u_k^2 + v_w u_k)`. A per-step constant keeps the model
//! equal to the true objective at the linearization point.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::PlanError;
use crate::kinematics::{locate, position_coefficient, rollout_unchecked, CrossingRecord, Trajectory};
use crate::powertrain::{trajectory_fuel, FuelTrace, Powertrain, ResistanceCoefficients};
use crate::qp::{
    psd_repair, solve_qp, solve_qp_from, LinearConstraint, PenaltySide, QpStatus, QuadraticProgram, SoftPenalty,
};
use crate::scenario::Scenario;
use crate::signals::{crossing_valid_with_margin, turn_speed_limits, TurnLimits, WindowSelection};

/// Feasibility tolerance applied when accepting iterates.
pub const ACCEPT_TOL: f64 = 1e-6;

/// Weighted objective terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    /// `w_fc` times fuel in grams.
    pub fuel: f64,
    /// `-w_t` times mean speed.
    pub time: f64,
    /// `w_c` times the acceleration and jerk penalty.
    pub comfort: f64,
    /// Turning penalties evaluated at the interpolated crossing.
    pub soft_penalty: f64,
    pub total: f64,
}

impl ObjectiveBreakdown {
    /// Total without the turning penalties.
    pub fn smooth(&self) -> f64 {
        self.fuel + self.time + self.comfort
    }
}

fn turn_limits_per_intersection(s: &Scenario) -> Vec<Option<TurnLimits>> {
    s.intersections
        .iter()
        .map(|i| i.turn.as_ref().map(turn_speed_limits))
        .collect()
}

/// Turning-penalty value for a crossing record.
fn turn_penalty(limits: &TurnLimits, c: &CrossingRecord, slope: f64) -> f64 {
    slope * ((c.speed - limits.v_turn).max(0.0) + (c.accel - limits.a_max).max(0.0) + (limits.a_min - c.accel).max(0.0))
}

/// Objective of a trajectory under the true fuel model.
pub fn evaluate_true_objective(traj: &Trajectory, s: &Scenario) -> ObjectiveBreakdown {
    let fuel = trajectory_fuel(traj, &Powertrain::new(s), s.horizon.initial_accel);
    evaluate_with_fuel(traj, s, &fuel)
}

fn evaluate_with_fuel(traj: &Trajectory, s: &Scenario, fuel: &FuelTrace) -> ObjectiveBreakdown {
    let w = &s.weights;
    let n = traj.steps();
    let mean = traj.v[1..].iter().sum::<f64>() / n as f64;
    let comfort: f64 = traj
        .a
        .iter()
        .zip(traj.accel_increments(s.horizon.initial_accel))
        .map(|(a, j)| a * a + w.jerk * j * j)
        .sum();
    let mut soft = 0.0;
    for (int, lim) in s.intersections.iter().zip(turn_limits_per_intersection(s)) {
        if let (Some(lim), Some(c)) = (lim, traj.crossing(int.position)) {
            soft += turn_penalty(&lim, &c, s.solver.soft_slope);
        }
    }
    let fuel_term = w.fuel * fuel.total_grams;
    let time = -w.time * mean;
    let comfort = w.comfort * comfort;
    ObjectiveBreakdown {
        fuel: fuel_term,
        time,
        comfort,
        soft_penalty: soft,
        total: fuel_term + time + comfort + soft,
    }
}

/// Convexified subproblem around an iterate.
#[derive(Debug, Clone)]
pub struct SubproblemData {
    /// Linearization speeds `v^j` (empty for the power-minimizing start).
    pub speeds: Vec<f64>,
    pub powers: Vec<f64>,
    pub fuel_rates: Vec<f64>,
    /// Per-step scaling of the traction power (g/J).
    pub ratios: Vec<f64>,
    /// Objective offset independent of the decisions.
    pub constant: f64,
    /// Shift added by the positive-definiteness repair.
    pub psd_shift: f64,
    pub qp: QuadraticProgram,
    /// Linearization point (zero for the start problem).
    pub center: Vec<f64>,
}

/// How turning limits enter a subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TurnHandling {
    None,
    Soft,
    Hard,
}

/// Accumulates `1/2 a'Ha + g'a + c` on the acceleration vector.
struct Builder {
    n: usize,
    dt: f64,
    v0: f64,
    h: DMatrix<f64>,
    g: DVector<f64>,
    c: f64,
    /// Coefficients `q_k u_k^2 + l_k u_k` on end-of-step speeds.
    q: Vec<f64>,
    l: Vec<f64>,
}

impl Builder {
    fn new(n: usize, dt: f64, v0: f64) -> Self {
        Self {
            n,
            dt,
            v0,
            h: DMatrix::zeros(n, n),
            g: DVector::zeros(n),
            c: 0.0,
            q: vec![0.0; n],
            l: vec![0.0; n],
        }
    }

    /// `kappa_k a_k u_k` for every step.
    fn kinetic(&mut self, kappa: &[f64]) {
        let (dt, v0) = (self.dt, self.v0);
        for k in 0..self.n {
            let kk = kappa[k];
            self.g[k] += kk * v0;
            self.h[(k, k)] += 2.0 * kk * dt;
            for i in 0..k {
                self.h[(i, k)] += kk * dt;
                self.h[(k, i)] += kk * dt;
            }
        }
    }

    fn comfort(&mut self, w_c: f64, w_j: f64, a_init: f64) {
        let n = self.n;
        for k in 0..n {
            self.h[(k, k)] += 2.0 * w_c;
        }
        let wj = w_c * w_j;
        self.h[(0, 0)] += 2.0 * wj;
        self.g[0] -= 2.0 * wj * a_init;
        self.c += wj * a_init * a_init;
        for k in 1..n {
            self.h[(k, k)] += 2.0 * wj;
            self.h[(k - 1, k - 1)] += 2.0 * wj;
            self.h[(k, k - 1)] -= 2.0 * wj;
            self.h[(k - 1, k)] -= 2.0 * wj;
        }
    }

    fn finish(mut self) -> (DMatrix<f64>, DVector<f64>, f64) {
        let (n, dt, v0) = (self.n, self.dt, self.v0);
        let mut q_suf = vec![0.0; n + 1];
        let mut lin_suf = vec![0.0; n + 1];
        for k in (0..n).rev() {
            q_suf[k] = q_suf[k + 1] + self.q[k];
            lin_suf[k] = lin_suf[k + 1] + 2.0 * self.q[k] * v0 + self.l[k];
            self.c += self.q[k] * v0 * v0 + self.l[k] * v0;
        }
        for i in 0..n {
            self.g[i] += dt * lin_suf[i];
            for j in 0..n {
                self.h[(i, j)] += 2.0 * dt * dt * q_suf[i.max(j)];
            }
        }
        (self.h, self.g, self.c)
    }
}

fn speed_row(k_end: usize, dt: f64, sign: f64) -> Vec<(usize, f64)> {
    // v[k_end] - v0 = dt * sum_{i < k_end} a_i
    (0..k_end).map(|i| (i, sign * dt)).collect()
}

fn position_row(t: f64, dt: f64, n: usize, sign: f64) -> (Vec<(usize, f64)>, f64) {
    // d(t) = (1 - f) d_k + f d_{k+1}; returns coefficients on a and the v0 factor
    let p = locate(t, dt, n);
    let (k, f) = (p.step, p.frac);
    let coeffs = (0..n)
        .map(|j| {
            let c = (1.0 - f) * position_coefficient(k, j, dt) + f * position_coefficient(k + 1, j, dt);
            (j, sign * c)
        })
        .filter(|&(_, c)| c != 0.0)
        .collect();
    let v0_factor = ((1.0 - f) * k as f64 + f * (k + 1) as f64) * dt;
    (coeffs, sign * v0_factor)
}

/// Three samples bracketing a crossing.
fn bracket(c: &CrossingRecord, max_index: usize) -> Vec<usize> {
    let start = if c.frac < 0.5 {
        c.step as isize - 1
    } else {
        c.step as isize
    };
    (start..start + 3)
        .filter(|&i| i >= 0 && i as usize <= max_index)
        .map(|i| i as usize)
        .collect()
}

struct Assembly<'a> {
    s: &'a Scenario,
    sel: &'a WindowSelection,
    limits: Vec<Option<TurnLimits>>,
}

impl<'a> Assembly<'a> {
    fn n(&self) -> usize {
        self.s.horizon.steps()
    }

    /// Bounds, jerk, speed and crossing constraints; with `center` the trust
    /// region is intersected in.
    fn constraints(&self, qp: &mut QuadraticProgram, center: Option<&Trajectory>) {
        let h = &self.s.horizon;
        let cfg = &self.s.solver;
        let (n, dt, v0) = (self.n(), h.time_step, h.initial_speed);
        let (jmin, jmax) = h.jerk_step_bounds();
        for k in 0..n {
            let mut lo = h.accel_min;
            let mut hi = h.accel_max;
            if let Some(c) = center {
                lo = lo.max(c.a[k] - cfg.trust_accel);
                hi = hi.min(c.a[k] + cfg.trust_accel);
            }
            if k == 0 {
                lo = lo.max(h.initial_accel + jmin);
                hi = hi.min(h.initial_accel + jmax);
            }
            qp.lower[k] = lo;
            qp.upper[k] = hi;
        }
        for k in 1..n {
            qp.constraints
                .push(LinearConstraint::new(vec![(k, 1.0), (k - 1, -1.0)], jmax));
            qp.constraints
                .push(LinearConstraint::new(vec![(k, -1.0), (k - 1, 1.0)], -jmin));
        }
        for k in 1..=n {
            let mut lo: f64 = 0.0;
            let mut hi = h.speed_limit;
            if let Some(c) = center {
                lo = lo.max(c.v[k] - cfg.trust_speed);
                hi = hi.min(c.v[k] + cfg.trust_speed);
            }
            qp.constraints
                .push(LinearConstraint::new(speed_row(k, dt, 1.0), hi - v0));
            qp.constraints
                .push(LinearConstraint::new(speed_row(k, dt, -1.0), v0 - lo));
        }
        let eps = cfg.crossing_margin;
        for (&wi, int) in self.sel.0.iter().zip(&self.s.intersections) {
            let w = &int.windows[wi];
            if w.t_r2g > 0.0 {
                // d(t_r2g) <= x - eps
                let (coeffs, v0f) = position_row(w.t_r2g, dt, n, 1.0);
                qp.constraints
                    .push(LinearConstraint::new(coeffs, int.position - eps - v0f * v0));
            }
            // d(min(t_g2r, T)) >= x + eps
            let (coeffs, v0f) = position_row(w.t_g2r.min(h.duration), dt, n, -1.0);
            qp.constraints
                .push(LinearConstraint::new(coeffs, -(int.position + eps) - v0f * v0));
        }
    }

    /// Turning limits at the samples bracketing each crossing of `prev`.
    fn turning(&self, qp: &mut QuadraticProgram, prev: &Trajectory, mode: TurnHandling) {
        if mode == TurnHandling::None {
            return;
        }
        let h = &self.s.horizon;
        let (n, dt, v0) = (self.n(), h.time_step, h.initial_speed);
        let slope = self.s.solver.soft_slope;
        for (int, lim) in self.s.intersections.iter().zip(&self.limits) {
            let (Some(lim), Some(c)) = (lim, prev.crossing(int.position)) else {
                continue;
            };
            for s in bracket(&c, n) {
                if s >= 1 {
                    let coeffs = speed_row(s, dt, 1.0);
                    let thr = lim.v_turn - v0;
                    match mode {
                        TurnHandling::Soft => qp.penalties.push(SoftPenalty {
                            coeffs,
                            threshold: thr,
                            slope,
                            side: PenaltySide::Above,
                        }),
                        TurnHandling::Hard => qp.constraints.push(LinearConstraint::new(coeffs, thr)),
                        TurnHandling::None => {}
                    }
                }
                let ka = s.min(n - 1);
                match mode {
                    TurnHandling::Soft => {
                        qp.penalties.push(SoftPenalty {
                            coeffs: vec![(ka, 1.0)],
                            threshold: lim.a_max,
                            slope,
                            side: PenaltySide::Above,
                        });
                        qp.penalties.push(SoftPenalty {
                            coeffs: vec![(ka, 1.0)],
                            threshold: lim.a_min,
                            slope,
                            side: PenaltySide::Below,
                        });
                    }
                    TurnHandling::Hard => {
                        qp.upper[ka] = qp.upper[ka].min(lim.a_max);
                        qp.lower[ka] = qp.lower[ka].max(lim.a_min);
                    }
                    TurnHandling::None => {}
                }
            }
        }
    }

    /// Power-minimizing start objective: traction kinetic power scaled by the
    /// marginal fuel slope, plus exact time and comfort terms; no trust region.
    fn start(&self, prev: Option<&Trajectory>, turn: TurnHandling) -> SubproblemData {
        let s = self.s;
        let h = &s.horizon;
        let n = self.n();
        let sigma = s.fuel_curve.slope_at_zero() / s.vehicle.transmission_efficiency;
        let mut b = Builder::new(n, h.time_step, h.initial_speed);
        let kappa = vec![s.weights.fuel * h.time_step * sigma * s.vehicle.mass; n];
        b.kinetic(&kappa);
        for k in 0..n {
            b.l[k] -= s.weights.time / n as f64;
        }
        b.comfort(s.weights.comfort, s.weights.jerk, h.initial_accel);
        let (hm, g, c) = b.finish();
        let (hm, shift) = psd_repair(&hm);
        let mut qp = QuadraticProgram::new(hm, g);
        qp.constant = c;
        self.constraints(&mut qp, None);
        if let Some(p) = prev {
            self.turning(&mut qp, p, turn);
        }
        SubproblemData {
            speeds: Vec::new(),
            powers: Vec::new(),
            fuel_rates: Vec::new(),
            ratios: vec![sigma; n],
            constant: c,
            psd_shift: shift,
            qp,
            center: vec![0.0; n],
        }
    }

    /// Fuel-ratio subproblem around `prev`.
    fn around(&self, prev: &Trajectory, fuel: &FuelTrace, turn: TurnHandling) -> SubproblemData {
        let s = self.s;
        let h = &s.horizon;
        let n = self.n();
        let dt = h.time_step;
        let res = ResistanceCoefficients::new(&s.vehicle);
        let sigma = s.fuel_curve.slope_at_zero() / s.vehicle.transmission_efficiency;
        let ratio_floor =
            s.vehicle.transmission_efficiency * s.fuel_curve.idle_rate / s.fuel_curve.slope_at_zero().max(1e-300);
        let ratio_top = s
            .fuel_curve
            .static_rate(ratio_floor / s.vehicle.transmission_efficiency)
            / ratio_floor;
        let wf = s.weights.fuel * dt;
        let mut b = Builder::new(n, dt, h.initial_speed);
        let mut powers = Vec::with_capacity(n);
        let mut rates = Vec::with_capacity(n);
        let mut ratios = Vec::with_capacity(n);
        let mut kappa = vec![0.0; n];
        let mut fuel_const = 0.0;
        for k in 0..n {
            let p = fuel.samples[k].traction_power;
            let fc = fuel.samples[k].fuel_rate;
            let beta = if p >= ratio_floor {
                fc / p
            } else if p > 0.0 {
                // blend from the zero-power slope to the chord ratio so the
                // scaling stays continuous in p
                sigma + p / ratio_floor * (ratio_top - sigma)
            } else {
                sigma
            };
            fuel_const += wf * (fc - beta * p);
            let u = prev.v[k + 1];
            let air = (u + res.wind).abs();
            kappa[k] = wf * beta * res.mass;
            b.l[k] += wf * beta * res.linear;
            b.q[k] += wf * beta * res.aero * air;
            b.l[k] += wf * beta * res.aero * air * res.wind;
            b.l[k] -= s.weights.time / n as f64;
            powers.push(p);
            rates.push(fc);
            ratios.push(beta);
        }
        b.kinetic(&kappa);
        b.comfort(s.weights.comfort, s.weights.jerk, h.initial_accel);
        b.c += fuel_const;
        let (hm, mut g, mut c) = b.finish();
        let (hm, shift) = psd_repair(&hm);
        if shift > 0.0 {
            // proximal form keeps the model value at the center unchanged
            for k in 0..n {
                g[k] -= shift * prev.a[k];
                c += 0.5 * shift * prev.a[k] * prev.a[k];
            }
        }
        let mut qp = QuadraticProgram::new(hm, g);
        qp.constant = c;
        self.constraints(&mut qp, Some(prev));
        self.turning(&mut qp, prev, turn);
        SubproblemData {
            speeds: prev.v.clone(),
            powers,
            fuel_rates: rates,
            ratios,
            constant: c,
            psd_shift: shift,
            qp,
            center: prev.a.clone(),
        }
    }
}

/// Iteration-0 subproblem.
pub fn init_subproblem(s: &Scenario, sel: &WindowSelection) -> SubproblemData {
    let asm = Assembly {
        s,
        sel,
        limits: turn_limits_per_intersection(s),
    };
    asm.start(None, TurnHandling::None)
}

/// Subproblem linearized around `prev` with trust region and soft turning
/// penalties.
pub fn build_subproblem(prev: &Trajectory, s: &Scenario, sel: &WindowSelection) -> SubproblemData {
    let asm = Assembly {
        s,
        sel,
        limits: turn_limits_per_intersection(s),
    };
    let fuel = trajectory_fuel(prev, &Powertrain::new(s), s.horizon.initial_accel);
    asm.around(prev, &fuel, TurnHandling::Soft)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    ReinitializedThenConverged,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Changes from the previous iterate; absent for the start iterate.
    pub delta_fc: Option<f64>,
    pub delta_v: Option<f64>,
    pub delta_v_cross: f64,
    pub delta_g: Option<f64>,
    /// Smooth model objective at the linearization point.
    pub model_at_center: f64,
    /// True smooth objective at the linearization point; absent for the start
    /// problem, whose objective is not a fuel model.
    pub true_at_center: Option<f64>,
    /// True total objective of the new iterate.
    pub objective: f64,
    pub crossing_times: Vec<Option<f64>>,
    pub reinitialized: bool,
    pub qp_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iterations: Vec<IterationRecord>,
    pub termination: Termination,
    /// Index into `iterations` of the returned iterate.
    pub best_iteration: usize,
}

impl ConvergenceReport {
    pub fn iteration_count(&self) -> usize {
        self.iterations.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub selection: WindowSelection,
    pub trajectory: Trajectory,
    pub fuel: FuelTrace,
    pub fuel_grams: f64,
    pub mean_speed: f64,
    pub distance: f64,
    pub crossings: Vec<Option<CrossingRecord>>,
    pub objective: ObjectiveBreakdown,
    pub report: ConvergenceReport,
}

struct Iterate {
    traj: Trajectory,
    fuel: FuelTrace,
    objective: ObjectiveBreakdown,
    crossings: Vec<Option<CrossingRecord>>,
}

fn make_iterate(s: &Scenario, a: &[f64]) -> Iterate {
    let traj = rollout_unchecked(s.horizon.initial_speed, a, s.horizon.time_step);
    let fuel = trajectory_fuel(&traj, &Powertrain::new(s), s.horizon.initial_accel);
    let objective = evaluate_with_fuel(&traj, s, &fuel);
    let crossings = s.intersections.iter().map(|i| traj.crossing(i.position)).collect();
    Iterate {
        traj,
        fuel,
        objective,
        crossings,
    }
}

/// Hard-constraint check used before accepting an iterate.
pub fn trajectory_feasible(traj: &Trajectory, s: &Scenario, sel: &WindowSelection, tol: f64) -> bool {
    let h = &s.horizon;
    let (jmin, jmax) = h.jerk_step_bounds();
    let speeds = traj.v.iter().all(|&v| v >= -tol && v <= h.speed_limit + tol);
    let accels = traj.a.iter().all(|&a| a >= h.accel_min - tol && a <= h.accel_max + tol);
    let jerks = traj
        .accel_increments(h.initial_accel)
        .iter()
        .all(|&j| j >= jmin - tol && j <= jmax + tol);
    speeds
        && accels
        && jerks
        && crossing_valid_with_margin(traj, sel, &s.intersections, s.solver.crossing_margin, tol).valid
}

fn excess_crossing_speed(limits: &[Option<TurnLimits>], it: &Iterate) -> f64 {
    let mut worst: f64 = 0.0;
    for (c, lim) in it.crossings.iter().zip(limits) {
        if let (Some(c), Some(l)) = (c, lim) {
            worst = worst.max(c.speed - l.v_turn);
        }
    }
    worst.max(0.0)
}

fn crossing_time_jump(a: &Iterate, b: &Iterate) -> f64 {
    a.crossings
        .iter()
        .zip(&b.crossings)
        .map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => (x.time - y.time).abs(),
            (None, None) => 0.0,
            _ => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

fn qp_failure(sol: &crate::qp::QpSolution) -> Option<String> {
    match &sol.status {
        QpStatus::Infeasible { worst, violation } => Some(format!("constraint {worst:?} violated by {violation:.3e}")),
        _ => None,
    }
}

/// Optimize the acceleration sequence for one window selection.
pub fn solve_fixed_window(s: &Scenario, sel: &WindowSelection) -> Result<SolveResult, PlanError> {
    sel.check(&s.intersections).map_err(PlanError::BadSelection)?;
    let n = s.horizon.steps();
    let cfg = &s.solver;
    let asm = Assembly {
        s,
        sel,
        limits: turn_limits_per_intersection(s),
    };
    let has_turn = s.has_turns();

    let start = asm.start(None, TurnHandling::None);
    let sol = solve_qp(&start.qp);
    if let Some(msg) = qp_failure(&sol) {
        return Err(PlanError::Infeasible(format!("selection {:?}: {msg}", sel.0)));
    }
    let mut current = make_iterate(s, &sol.x);
    let mut records = vec![IterationRecord {
        iteration: 0,
        delta_fc: None,
        delta_v: None,
        delta_v_cross: excess_crossing_speed(&asm.limits, &current),
        delta_g: None,
        model_at_center: start.qp.quadratic_value(&start.center),
        true_at_center: None,
        objective: current.objective.total,
        crossing_times: current.crossings.iter().map(|c| c.map(|c| c.time)).collect(),
        reinitialized: false,
        qp_iterations: sol.iterations,
    }];
    let mut feasible_seen = trajectory_feasible(&current.traj, s, sel, ACCEPT_TOL);
    let mut best: Option<(usize, f64)> = feasible_seen.then_some((0, current.objective.total));
    let mut best_iterate = feasible_seen.then(|| (current.traj.clone(), current.fuel.clone()));
    let mut reinitialized = false;
    let mut hard_turn = false;
    let mut termination = Termination::MaxIterations;

    for j in 1..=cfg.max_iterations {
        let mut reinit_now = false;
        let turn_mode = if hard_turn {
            TurnHandling::Hard
        } else {
            TurnHandling::Soft
        };
        let mut data = asm.around(&current.traj, &current.fuel, turn_mode);
        let mut sol = solve_qp_from(&data.qp, &current.traj.a);
        if qp_failure(&sol).is_some() && turn_mode == TurnHandling::Hard {
            data = asm.around(&current.traj, &current.fuel, TurnHandling::Soft);
            sol = solve_qp_from(&data.qp, &current.traj.a);
        }
        if qp_failure(&sol).is_some() {
            break;
        }
        let model_at_center = data.qp.quadratic_value(&data.center);
        let true_at_center = current.objective.smooth();
        let mut next = make_iterate(s, &sol.x);
        let mut qp_iterations = sol.iterations;

        if has_turn
            && !reinitialized
            && crossing_time_jump(&next, &current) > cfg.reinit_threshold * s.horizon.time_step
        {
            // restart from the power objective with hard turning limits at the
            // samples bracketing the new crossing
            let restart = asm.start(Some(&next.traj), TurnHandling::Hard);
            let rs = solve_qp_from(&restart.qp, &next.traj.a);
            if qp_failure(&rs).is_none() {
                next = make_iterate(s, &rs.x);
                qp_iterations += rs.iterations;
                reinitialized = true;
                hard_turn = true;
                reinit_now = true;
            }
        }

        let delta_fc = next
            .fuel
            .samples
            .iter()
            .zip(&current.fuel.samples)
            .map(|(a, b)| (a.fuel_rate - b.fuel_rate).abs())
            .fold(0.0, f64::max);
        let delta_v = next
            .traj
            .v
            .iter()
            .zip(&current.traj.v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let delta_v_cross = excess_crossing_speed(&asm.limits, &next);
        let delta_g = (delta_fc * delta_fc + delta_v * delta_v + delta_v_cross * delta_v_cross).sqrt();
        records.push(IterationRecord {
            iteration: j,
            delta_fc: Some(delta_fc),
            delta_v: Some(delta_v),
            delta_v_cross,
            delta_g: Some(delta_g),
            model_at_center,
            true_at_center: Some(true_at_center),
            objective: next.objective.total,
            crossing_times: next.crossings.iter().map(|c| c.map(|c| c.time)).collect(),
            reinitialized: reinit_now,
            qp_iterations,
        });
        current = next;
        if trajectory_feasible(&current.traj, s, sel, ACCEPT_TOL) {
            feasible_seen = true;
            if best.is_none_or(|(_, v)| current.objective.total < v) {
                best = Some((j, current.objective.total));
                best_iterate = Some((current.traj.clone(), current.fuel.clone()));
            }
        }
        if delta_g < cfg.stop_threshold && !reinit_now {
            termination = if reinitialized {
                Termination::ReinitializedThenConverged
            } else {
                Termination::Converged
            };
            break;
        }
    }

    if !feasible_seen {
        return Err(PlanError::Infeasible(format!(
            "selection {:?}: no iterate satisfies the crossing constraints",
            sel.0
        )));
    }
    let (best_idx, _) = best.expect("feasible iterate recorded");
    let (traj, fuel) = best_iterate.expect("feasible iterate recorded");
    let objective = evaluate_with_fuel(&traj, s, &fuel);
    let crossings = s.intersections.iter().map(|i| traj.crossing(i.position)).collect();
    Ok(SolveResult {
        selection: sel.clone(),
        fuel_grams: fuel.total_grams,
        mean_speed: traj.v[1..].iter().sum::<f64>() / n as f64,
        distance: *traj.d.last().unwrap_or(&0.0),
        crossings,
        objective,
        report: ConvergenceReport {
            iterations: records,
            termination,
            best_iteration: best_idx,
        },
        trajectory: traj,
        fuel,
    })
}
