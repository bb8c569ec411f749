//! Brute-force and first-order references for the solvers.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dp::{comparison_scenario, DpGrid};
use crate::driver::{maneuver_accel, peak_ratio};
use crate::kinematics::{rollout, Trajectory};
use crate::qp::{LinearConstraint, PenaltySide, QuadraticProgram, SoftPenalty};
use crate::scenario::{JerkMode, Scenario};
use crate::scp::evaluate_true_objective;

/// Largest action-sequence count [`brute_force_best`] will enumerate.
pub const ENUMERATION_CAP: u64 = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("{sequences} action sequences exceed the enumeration cap of {ENUMERATION_CAP}")]
    TooLarge { sequences: f64 },
    #[error("no action sequence satisfies the constraints")]
    NoFeasibleSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    pub objective: f64,
    pub actions: Vec<f64>,
    pub trajectory: Trajectory,
    pub sequences: u64,
}

/// The whole band `[x - eps, x + eps]` is passed inside one green window and
/// before the horizon ends.
fn band_ok(traj: &Trajectory, s: &Scenario) -> bool {
    let eps = s.solver.crossing_margin;
    let t_end = s.horizon.duration;
    s.intersections.iter().all(|int| {
        let (Some(c_in), Some(c_out)) = (traj.crossing(int.position - eps), traj.crossing(int.position + eps)) else {
            return false;
        };
        int.windows
            .iter()
            .any(|w| w.t_r2g <= c_in.time + 1e-9 && c_out.time <= w.t_g2r.min(t_end) + 1e-9)
    })
}

/// Exhaustive minimum of the true objective over every sequence drawn from
/// the DP action set, subject to the same constraints the DP honors: speed
/// bounds, green passage of every stop-line band and, with an augmented
/// grid, the jerk bounds.
pub fn brute_force_best(s: &Scenario) -> Result<BruteForce, OracleError> {
    let grid = DpGrid::from_scenario(s);
    let n = grid.stages;
    let count = (grid.actions.len() as f64).powi(n as i32);
    if count > ENUMERATION_CAP as f64 {
        return Err(OracleError::TooLarge { sequences: count });
    }
    let scored = comparison_scenario(s);
    let h = &s.horizon;
    let (j_lo, j_hi) = h.jerk_step_bounds();
    let check_jerk = s.dp.jerk_mode == JerkMode::Augment;
    let mut best: Option<BruteForce> = None;
    let mut idx = vec![0usize; n];
    let mut visited = 0u64;
    'outer: loop {
        visited += 1;
        let actions: Vec<f64> = idx.iter().map(|&i| grid.actions[i]).collect();
        let jerk_ok = !check_jerk || {
            let mut prev = h.initial_accel;
            actions.iter().all(|&a| {
                let j = a - prev;
                prev = a;
                j >= j_lo - 1e-9 && j <= j_hi + 1e-9
            })
        };
        if jerk_ok {
            if let Ok(traj) = rollout(h.initial_speed, &actions, h.time_step) {
                if traj.v.iter().all(|&v| v <= h.speed_limit + 1e-9) && band_ok(&traj, s) {
                    let obj = evaluate_true_objective(&traj, &scored).total;
                    if best.as_ref().is_none_or(|b| obj < b.objective) {
                        best = Some(BruteForce {
                            objective: obj,
                            actions,
                            trajectory: traj,
                            sequences: 0,
                        });
                    }
                }
            }
        }
        for k in (0..n).rev() {
            idx[k] += 1;
            if idx[k] < grid.actions.len() {
                continue 'outer;
            }
            idx[k] = 0;
        }
        break;
    }
    let mut b = best.ok_or(OracleError::NoFeasibleSequence)?;
    b.sequences = visited;
    Ok(b)
}

/// Speed change of a driver maneuver by composite Simpson quadrature of the
/// acceleration profile. Integrates in `u` with `θ = u^4`, which removes the
/// integrable singularity at `θ = 0` when `m < 0`.
pub fn driver_speed_change_quadrature(m: f64, dv: f64, duration: f64, intervals: usize) -> f64 {
    let ra = peak_ratio(m, dv, duration);
    let n = intervals + intervals % 2;
    let h = 1.0 / n as f64;
    let f = |i: usize| {
        let u = i as f64 * h;
        maneuver_accel(u.powi(4), m, ra) * 4.0 * u.powi(3)
    };
    let mut sum = f(0) + f(n);
    for i in 1..n {
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i);
    }
    sum * h / 3.0 * duration
}

/// Dense rows `A x <= b` with dual box `[0, cap]` (`cap` infinite for hard
/// rows, the penalty slope for soft ones).
struct DualRows {
    a: DMatrix<f64>,
    b: DVector<f64>,
    cap: Vec<f64>,
}

fn dual_rows(qp: &QuadraticProgram) -> DualRows {
    let n = qp.dim();
    let mut rows: Vec<(Vec<f64>, f64, f64)> = Vec::new();
    let dense = |coeffs: &[(usize, f64)], sign: f64| {
        let mut r = vec![0.0; n];
        for &(i, c) in coeffs {
            r[i] += sign * c;
        }
        r
    };
    for c in &qp.constraints {
        rows.push((dense(&c.coeffs, 1.0), c.upper, f64::INFINITY));
    }
    for i in 0..n {
        if qp.upper[i].is_finite() {
            rows.push((dense(&[(i, 1.0)], 1.0), qp.upper[i], f64::INFINITY));
        }
        if qp.lower[i].is_finite() {
            rows.push((dense(&[(i, 1.0)], -1.0), -qp.lower[i], f64::INFINITY));
        }
    }
    for p in &qp.penalties {
        let (sign, rhs) = match p.side {
            PenaltySide::Above => (1.0, p.threshold),
            PenaltySide::Below => (-1.0, -p.threshold),
        };
        rows.push((dense(&p.coeffs, sign), rhs, p.slope));
    }
    let m = rows.len();
    let mut a = DMatrix::zeros(m, n);
    let mut b = DVector::zeros(m);
    let mut cap = Vec::with_capacity(m);
    for (r, (row, rhs, c)) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            a[(r, j)] = v;
        }
        b[r] = rhs;
        cap.push(c);
    }
    DualRows { a, b, cap }
}

/// Independent solve of a strictly convex QP (penalties included) by
/// accelerated projected gradient ascent on its dual. Returns the primal
/// point `x = -H^{-1}(g + A'λ)`.
pub fn dual_gradient_qp(qp: &QuadraticProgram, max_iter: usize, tol: f64) -> Vec<f64> {
    let hinv = qp
        .hessian
        .clone()
        .cholesky()
        .expect("oracle needs a positive definite Hessian")
        .inverse();
    let rows = dual_rows(qp);
    let primal = |lam: &DVector<f64>| -(&hinv * (&qp.gradient + rows.a.transpose() * lam));
    if rows.b.is_empty() {
        return primal(&DVector::zeros(0)).as_slice().to_vec();
    }
    let q = &rows.a * &hinv * rows.a.transpose();
    let lip = q.norm().max(1e-12);
    let project = |mut l: DVector<f64>| {
        for (v, &c) in l.iter_mut().zip(&rows.cap) {
            *v = v.clamp(0.0, c);
        }
        l
    };
    let mut lam = DVector::zeros(rows.b.len());
    let mut y = lam.clone();
    let mut t = 1.0f64;
    for _ in 0..max_iter {
        // dual gradient: A x(λ) - b
        let grad = &rows.a * primal(&y) - &rows.b;
        let next = project(&y + grad / lip);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let diff = &next - &lam;
        y = &next + diff.clone() * ((t - 1.0) / t_next);
        lam = next;
        t = t_next;
        if diff.amax() < tol * 1e-3 {
            break;
        }
    }
    primal(&lam).as_slice().to_vec()
}

/// Random strictly convex QP with a known feasible point; well conditioned
/// so first-order methods converge to high accuracy.
pub fn random_qp(seed: u64) -> QuadraticProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=8);
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = m.transpose() * &m * 0.5 + DMatrix::identity(n, n);
    let g = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
    let x_feas: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut qp = QuadraticProgram::new(h, g);
    for _ in 0..rng.random_range(0..=6) {
        let mut coeffs = Vec::new();
        for i in 0..n {
            if rng.random_bool(0.7) {
                coeffs.push((i, rng.random_range(-1.0..1.0)));
            }
        }
        if coeffs.is_empty() {
            continue;
        }
        let at: f64 = coeffs.iter().map(|&(i, c)| c * x_feas[i]).sum();
        qp.constraints
            .push(LinearConstraint::new(coeffs, at + rng.random_range(0.0..0.5)));
    }
    for i in 0..n {
        if rng.random_bool(0.4) {
            qp.lower[i] = x_feas[i] - rng.random_range(0.1..1.0);
        }
        if rng.random_bool(0.4) {
            qp.upper[i] = x_feas[i] + rng.random_range(0.1..1.0);
        }
    }
    for _ in 0..rng.random_range(0..=3) {
        let coeffs: Vec<(usize, f64)> = (0..n).map(|i| (i, rng.random_range(-1.0..1.0))).collect();
        qp.penalties.push(SoftPenalty {
            coeffs,
            threshold: rng.random_range(-1.0..1.0),
            slope: rng.random_range(0.5..5.0),
            side: if rng.random_bool(0.5) {
                PenaltySide::Above
            } else {
                PenaltySide::Below
            },
        });
    }
    qp
}
