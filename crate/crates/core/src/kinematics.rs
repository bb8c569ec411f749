//! Discrete longitudinal motion.
//!
//! Speeds follow `v[k+1] = v[k] + a[k] dt` and displacement uses the
//! trapezoid rule, so both are exact for piecewise-constant acceleration.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::KinematicsError;

/// Tolerance below zero accepted for speeds before a rollout is rejected.
pub const SPEED_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Acceleration per step, length `N`.
    pub a: Vec<f64>,
    /// Speed samples, length `N + 1`.
    pub v: Vec<f64>,
    /// Displacement from the start, length `N + 1`.
    pub d: Vec<f64>,
    pub dt: f64,
}

/// Integrate an acceleration sequence from `v0`.
pub fn rollout(v0: f64, a: &[f64], dt: f64) -> Result<Trajectory, KinematicsError> {
    if a.is_empty() {
        return Err(KinematicsError::Empty);
    }
    let traj = rollout_unchecked(v0, a, dt);
    if let Some((k, &v)) = traj.v.iter().enumerate().find(|(_, &v)| v < -SPEED_TOLERANCE) {
        return Err(KinematicsError::NegativeSpeed { sample: k, speed: v });
    }
    Ok(traj)
}

/// Same recursion without the speed check.
pub fn rollout_unchecked(v0: f64, a: &[f64], dt: f64) -> Trajectory {
    let n = a.len();
    let mut v = Vec::with_capacity(n + 1);
    let mut d = Vec::with_capacity(n + 1);
    v.push(v0);
    d.push(0.0);
    for k in 0..n {
        let vn = v[k] + a[k] * dt;
        d.push(d[k] + 0.5 * (vn + v[k]) * dt);
        v.push(vn);
    }
    Trajectory {
        a: a.to_vec(),
        v,
        d,
        dt,
    }
}

/// The `N x N` unit lower-triangular matrix with `v[1..] = dt D a + v0`.
pub fn integration_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if j <= i { 1.0 } else { 0.0 })
}

/// Coefficient of `a[j]` in `d[k]`, i.e. `dt^2 (k - j - 1/2)` for `j < k`.
pub fn position_coefficient(k: usize, j: usize, dt: f64) -> f64 {
    if j < k {
        dt * dt * (k as f64 - j as f64 - 0.5)
    } else {
        0.0
    }
}

/// Where a time instant falls on the sample grid: `t = (step + frac) dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePoint {
    pub step: usize,
    pub frac: f64,
}

/// Locate `t` on a grid of `n` steps, clamping to `[0, n dt]`. At the end of
/// the horizon the point is `(n - 1, 1.0)`.
pub fn locate(t: f64, dt: f64, n: usize) -> SamplePoint {
    let s = (t / dt).clamp(0.0, n as f64);
    let step = (s.floor() as usize).min(n - 1);
    SamplePoint {
        step,
        frac: s - step as f64,
    }
}

fn lerp(y: &[f64], p: SamplePoint) -> f64 {
    let hi = (p.step + 1).min(y.len() - 1);
    y[p.step] + p.frac * (y[hi] - y[p.step])
}

/// Interpolated record of the first passage over a position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingRecord {
    pub time: f64,
    pub speed: f64,
    pub accel: f64,
    /// Step containing the crossing.
    pub step: usize,
    /// Fraction of that step elapsed at the crossing.
    pub frac: f64,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.a.len()
    }

    pub fn duration(&self) -> f64 {
        self.a.len() as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.a.len()).map(|k| k as f64 * self.dt).collect()
    }

    /// Displacement at time `t` by linear interpolation between samples.
    /// Instants outside the horizon clamp to its ends.
    pub fn position_at(&self, t: f64) -> f64 {
        lerp(&self.d, locate(t, self.dt, self.steps()))
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        lerp(&self.v, locate(t, self.dt, self.steps()))
    }

    /// Acceleration at `t`, treating `a[k]` as a sample at `k dt` and holding
    /// the last value.
    pub fn accel_at(&self, t: f64) -> f64 {
        lerp(&self.a, locate(t, self.dt, self.steps()))
    }

    pub fn mean_speed(&self) -> f64 {
        self.v.iter().sum::<f64>() / self.v.len() as f64
    }

    /// First crossing of `x`, or `None` if the trajectory ends short of it.
    pub fn crossing(&self, x: f64) -> Option<CrossingRecord> {
        crossing_record(self, x)
    }

    /// Per-step jerk `a[k] - a[k-1]` with `a[-1] = a_init`.
    pub fn accel_increments(&self, a_init: f64) -> Vec<f64> {
        let mut prev = a_init;
        self.a
            .iter()
            .map(|&a| {
                let j = a - prev;
                prev = a;
                j
            })
            .collect()
    }
}

/// First instant at which the linearly interpolated displacement reaches `x`.
pub fn crossing_record(traj: &Trajectory, x: f64) -> Option<CrossingRecord> {
    let d = &traj.d;
    if *d.last()? < x {
        return None;
    }
    let n = traj.steps();
    let (step, frac) = if d[0] >= x {
        (0, 0.0)
    } else {
        let k = (0..n).find(|&k| d[k + 1] >= x)?;
        let span = d[k + 1] - d[k];
        (k, if span > 0.0 { (x - d[k]) / span } else { 1.0 })
    };
    let p = SamplePoint { step, frac };
    Some(CrossingRecord {
        time: (step as f64 + frac) * traj.dt,
        speed: lerp(&traj.v, p),
        accel: lerp(&traj.a, p),
        step,
        frac,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_speed_rollout() {
        let t = rollout(10.0, &[0.0; 5], 1.0).unwrap();
        assert_eq!(t.v, vec![10.0; 6]);
        assert_eq!(t.d, vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0]);
    }

    #[test]
    fn single_step_from_rest() {
        let t = rollout(0.0, &[2.0], 1.0).unwrap();
        assert_eq!(t.v, vec![0.0, 2.0]);
        assert_eq!(t.d, vec![0.0, 1.0]);
    }

    #[test]
    fn empty_and_negative_rejected() {
        assert_eq!(rollout(1.0, &[], 1.0), Err(KinematicsError::Empty));
        assert!(matches!(
            rollout(1.0, &[-2.0], 1.0),
            Err(KinematicsError::NegativeSpeed { sample: 1, .. })
        ));
    }

    #[test]
    fn matrix_form_matches_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dt = 0.5;
        let a: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t = rollout_unchecked(3.0, &a, dt);
        let dmat = integration_matrix(20);
        let v = dmat * DVector::from_vec(a.clone()) * dt + DVector::from_element(20, 3.0);
        for k in 0..20 {
            assert!((v[k] - t.v[k + 1]).abs() < 1e-12);
        }
        for k in 0..=20 {
            let dk: f64 = k as f64 * dt * 3.0 + (0..20).map(|j| position_coefficient(k, j, dt) * a[j]).sum::<f64>();
            assert!((dk - t.d[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn crossing_uniform_motion() {
        let t = rollout(10.0, &[0.0; 5], 1.0).unwrap();
        let c = t.crossing(25.0).unwrap();
        assert_relative_eq!(c.time, 2.5);
        assert_relative_eq!(c.speed, 10.0);
        assert!(t.crossing(50.5).is_none());
    }

    #[test]
    fn crossing_stopping_short() {
        let t = rollout(4.0, &[-2.0, -2.0, 0.0, 0.0], 1.0).unwrap();
        assert_relative_eq!(*t.d.last().unwrap(), 4.0);
        assert!(t.crossing(4.5).is_none());
    }

    proptest! {
        #[test]
        fn displacement_non_decreasing(a in proptest::collection::vec(0.0..2.0f64, 1..40), v0 in 0.0..20.0f64) {
            // accelerations that never reverse the motion
            let t = rollout(v0, &a, 1.0).unwrap();
            for k in 0..a.len() {
                prop_assert!(t.d[k + 1] >= t.d[k]);
            }
        }

        #[test]
        fn crossing_within_one_step_of_scan(v0 in 1.0..15.0f64, a in proptest::collection::vec(-0.3..0.5f64, 30), x in 1.0..200.0f64) {
            let t = rollout_unchecked(v0, &a, 1.0);
            prop_assume!(t.v.iter().all(|&v| v > 0.0));
            if let Some(c) = t.crossing(x) {
                let scan = t.d.iter().position(|&d| d >= x).unwrap();
                prop_assert!((c.time - scan as f64).abs() <= 1.0 + 1e-12);
                prop_assert!((t.position_at(c.time) - x).abs() < 1e-9);
            } else {
                prop_assert!(*t.d.last().unwrap() < x);
            }
        }
    }
}
