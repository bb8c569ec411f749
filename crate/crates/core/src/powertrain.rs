//! Traction power, best-BSFC torque and fuel rate.
//!
//! Under the ideal-CVT assumption the engine always runs on its best-BSFC
//! line, so the static fuel rate depends on engine power alone. That map is a
//! configurable piecewise-linear [`FuelCurve`]; the shipped default is
//! synthetic.

use serde::{Deserialize, Serialize};

use crate::kinematics::Trajectory;
use crate::scenario::{BsfcLine, FuelCurve, Scenario, VehicleParams};

/// Standard gravity (m/s²).
pub const GRAVITY: f64 = 9.80665;

impl FuelCurve {
    /// Synthetic curve for a 2.5 L engine with idle anchored at
    /// 800 RPM / 0 N·m. Marginal consumption rises from 245 to 306 g/kWh.
    pub fn synthetic_default() -> Self {
        Self {
            breakpoints: vec![
                [0.0, 0.20],
                [10_000.0, 0.88],
                [30_000.0, 2.28],
                [60_000.0, 4.53],
                [130_000.0, 10.48],
            ],
            idle_rate: 0.20,
            transient_coefficient: 0.0,
        }
    }

    /// Static fuel rate (g/s) at engine power `p_eng` (W). Extrapolates past
    /// the last breakpoint with the last segment's slope; non-positive power
    /// idles.
    pub fn static_rate(&self, p_eng: f64) -> f64 {
        let bp = &self.breakpoints;
        if p_eng <= 0.0 || bp.len() == 1 {
            return if p_eng <= 0.0 { self.idle_rate } else { bp[0][1] };
        }
        let idx = bp.partition_point(|x| x[0] <= p_eng);
        let (lo, hi) = if idx >= bp.len() {
            (bp[bp.len() - 2], bp[bp.len() - 1])
        } else {
            (bp[idx - 1], bp[idx])
        };
        lo[1] + (hi[1] - lo[1]) * (p_eng - lo[0]) / (hi[0] - lo[0])
    }

    /// Right-derivative of the static rate at zero power (g/J).
    pub fn slope_at_zero(&self) -> f64 {
        match self.breakpoints.as_slice() {
            [a, b, ..] => (b[1] - a[1]) / (b[0] - a[0]),
            _ => 0.0,
        }
    }
}

impl BsfcLine {
    /// Synthetic line through idle (800 RPM, 0 N·m) and the best point
    /// (2000 RPM, 140 N·m).
    pub fn synthetic_default() -> Self {
        let idle = 800.0 * std::f64::consts::TAU / 60.0;
        let best = 2000.0 * std::f64::consts::TAU / 60.0;
        Self {
            slope: (1.0 - idle / best) / 140.0,
            intercept: idle,
            max_torque: 230.0,
        }
    }

    /// Engine speed (rad/s) on the line at `torque`.
    pub fn speed_at(&self, torque: f64) -> f64 {
        self.intercept / (1.0 - self.slope * torque)
    }
}

/// Torque on the best-BSFC line for a given engine power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorqueSample {
    pub torque: f64,
    /// Set when the exact solution lies beyond `max_torque`; `torque` is then
    /// clamped.
    pub saturated: bool,
}

/// Solve `P = omega(T) * T` on the BSFC line, i.e. `T = P / (b + k P)`.
pub fn torque_on_bsfc(p_eng: f64, line: &BsfcLine) -> TorqueSample {
    if p_eng <= 0.0 {
        return TorqueSample {
            torque: 0.0,
            saturated: false,
        };
    }
    let denom = line.intercept + line.slope * p_eng;
    let exact = if denom > 0.0 { p_eng / denom } else { f64::INFINITY };
    if exact > line.max_torque {
        TorqueSample {
            torque: line.max_torque,
            saturated: true,
        }
    } else {
        TorqueSample {
            torque: exact,
            saturated: false,
        }
    }
}

/// Traction power (W) at speed `v` and acceleration `a`.
pub fn traction_power(v: f64, a: f64, p: &VehicleParams) -> f64 {
    traction_power_with_gravity(v, a, p, GRAVITY)
}

pub fn traction_power_with_gravity(v: f64, a: f64, p: &VehicleParams, g: f64) -> f64 {
    let air = v + p.wind_speed;
    let aero = 0.5 * p.air_density * p.drag_coefficient * p.frontal_area * air * air.abs();
    let grade = p.mass * g * (p.grade.sin() + p.rolling_resistance * p.grade.cos());
    v * (p.mass * a + grade + aero)
}

/// Coefficients of `P(v, a) = M a v + linear v + aero (v + v_w)^2 v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResistanceCoefficients {
    pub mass: f64,
    /// Grade plus rolling resistance force (N).
    pub linear: f64,
    /// `0.5 rho C_d A` (kg/m).
    pub aero: f64,
    pub wind: f64,
}

impl ResistanceCoefficients {
    pub fn new(p: &VehicleParams) -> Self {
        Self {
            mass: p.mass,
            linear: p.mass * GRAVITY * (p.grade.sin() + p.rolling_resistance * p.grade.cos()),
            aero: 0.5 * p.air_density * p.drag_coefficient * p.frontal_area,
            wind: p.wind_speed,
        }
    }
}

/// One evaluated step of the powertrain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    /// Traction power at the wheels (W).
    pub traction_power: f64,
    /// Engine power `max(P, 0) / eta_T` (W).
    pub engine_power: f64,
    /// Engine torque on the BSFC line (N·m).
    pub torque: f64,
    /// Fuel rate (g/s).
    pub fuel_rate: f64,
    pub saturated: bool,
}

/// Powertrain view over a scenario's parameters.
#[derive(Debug, Clone, Copy)]
pub struct Powertrain<'a> {
    pub vehicle: &'a VehicleParams,
    pub curve: &'a FuelCurve,
    pub line: &'a BsfcLine,
}

impl<'a> Powertrain<'a> {
    pub fn new(s: &'a Scenario) -> Self {
        Self {
            vehicle: &s.vehicle,
            curve: &s.fuel_curve,
            line: &s.bsfc_line,
        }
    }

    pub fn traction_power(&self, v: f64, a: f64) -> f64 {
        traction_power(v, a, self.vehicle)
    }

    /// Evaluate fuel for traction power `p` given the previous step's engine
    /// torque.
    pub fn sample(&self, p: f64, torque_prev: f64, dt: f64) -> PowerSample {
        fuel_rate(
            p,
            torque_prev,
            self.curve,
            self.line,
            self.vehicle.transmission_efficiency,
            dt,
        )
    }

    /// Engine torque implied by steady operation at `(v, a)`; used as the
    /// torque before the first step.
    pub fn torque_at(&self, v: f64, a: f64) -> f64 {
        let p = self.traction_power(v, a).max(0.0) / self.vehicle.transmission_efficiency;
        torque_on_bsfc(p, self.line).torque
    }
}

/// Fuel rate for traction power `p` (W). Braking and coasting idle; the
/// transient term uses the backward difference of BSFC-line torque.
pub fn fuel_rate(
    p: f64,
    torque_prev: f64,
    curve: &FuelCurve,
    line: &BsfcLine,
    efficiency: f64,
    dt: f64,
) -> PowerSample {
    if p <= 0.0 {
        return PowerSample {
            traction_power: p,
            engine_power: 0.0,
            torque: 0.0,
            fuel_rate: curve.idle_rate,
            saturated: false,
        };
    }
    let p_eng = p / efficiency;
    let t = torque_on_bsfc(p_eng, line);
    let q = curve.static_rate(p_eng) + curve.transient_coefficient * (t.torque - torque_prev) / dt;
    PowerSample {
        traction_power: p,
        engine_power: p_eng,
        torque: t.torque,
        fuel_rate: q.max(curve.idle_rate),
        saturated: t.saturated,
    }
}

/// Per-step fuel accounting for a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuelTrace {
    pub samples: Vec<PowerSample>,
    /// Total fuel over the horizon (g).
    pub total_grams: f64,
}

impl FuelTrace {
    pub fn rates(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.fuel_rate).collect()
    }
}

/// Fuel over a trajectory. Step `k` is evaluated at its end speed `v[k+1]`
/// with acceleration `a[k]`; the torque before step 0 comes from steady
/// operation at `(v[0], initial_accel)`.
pub fn trajectory_fuel(traj: &Trajectory, pt: &Powertrain<'_>, initial_accel: f64) -> FuelTrace {
    let dt = traj.dt;
    let mut torque_prev = pt.torque_at(traj.v[0], initial_accel);
    let mut samples = Vec::with_capacity(traj.a.len());
    let mut total = 0.0;
    for (k, &a) in traj.a.iter().enumerate() {
        let p = pt.traction_power(traj.v[k + 1], a);
        let s = pt.sample(p, torque_prev, dt);
        total += s.fuel_rate * dt;
        torque_prev = s.torque;
        samples.push(s);
    }
    FuelTrace {
        samples,
        total_grams: total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::rollout;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn vehicle() -> VehicleParams {
        VehicleParams {
            mass: 1500.0,
            rolling_resistance: 0.01,
            air_density: 1.2,
            drag_coefficient: 0.3,
            frontal_area: 2.2,
            grade: 0.0,
            wind_speed: 0.0,
            transmission_efficiency: 0.9,
            gear_ratio: None,
            final_drive_ratio: None,
            wheel_radius: None,
        }
    }

    #[test]
    fn traction_power_hand_values() {
        let p = vehicle();
        assert_eq!(traction_power(0.0, 0.0, &p), 0.0);
        // 1500*9.81*0.01*10 + 0.5*1.2*0.3*2.2*1000
        assert_relative_eq!(traction_power_with_gravity(10.0, 0.0, &p, 9.81), 1867.5, epsilon = 1e-9);
        assert_relative_eq!(
            traction_power_with_gravity(10.0, 1.0, &p, 9.81),
            16867.5,
            epsilon = 1e-9
        );
    }

    #[test]
    fn torque_matches_bisection() {
        let line = BsfcLine::synthetic_default();
        assert_eq!(torque_on_bsfc(0.0, &line).torque, 0.0);
        let flat = BsfcLine {
            slope: 0.0,
            intercept: 100.0,
            max_torque: 1e9,
        };
        assert_relative_eq!(torque_on_bsfc(5000.0, &flat).torque, 50.0);
        for p in [500.0, 5_000.0, 20_000.0, 60_000.0] {
            // bisection on omega(T) * T = P over [0, max_torque]
            let (mut lo, mut hi) = (0.0, line.max_torque);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if line.speed_at(mid) * mid < p {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t = torque_on_bsfc(p, &line);
            assert!(!t.saturated);
            assert_relative_eq!(t.torque, 0.5 * (lo + hi), epsilon = 1e-9);
        }
        assert!(torque_on_bsfc(1e7, &line).saturated);
    }

    #[test]
    fn fuel_rate_idle_and_breakpoints() {
        let c = FuelCurve::synthetic_default();
        let l = BsfcLine::synthetic_default();
        assert_eq!(fuel_rate(0.0, 0.0, &c, &l, 0.9, 1.0).fuel_rate, c.idle_rate);
        assert_eq!(fuel_rate(-8000.0, 120.0, &c, &l, 0.9, 1.0).fuel_rate, c.idle_rate);
        for bp in &c.breakpoints {
            // traction power that maps exactly onto the breakpoint
            let q = fuel_rate(bp[0] * 0.9, 0.0, &c, &l, 0.9, 1.0).fuel_rate;
            assert_relative_eq!(q, bp[1], epsilon = 1e-12);
        }
        assert_relative_eq!(c.slope_at_zero(), 6.8e-5, epsilon = 1e-15);
    }

    #[test]
    fn transient_term_uses_torque_rate() {
        let mut c = FuelCurve::synthetic_default();
        c.transient_coefficient = 0.002;
        let l = BsfcLine::synthetic_default();
        let s = fuel_rate(20_000.0, 10.0, &c, &l, 1.0, 0.5);
        let expected = c.static_rate(20_000.0) + 0.002 * (s.torque - 10.0) / 0.5;
        assert_relative_eq!(s.fuel_rate, expected, epsilon = 1e-12);
        // large torque drop floors at idle
        let s = fuel_rate(100.0, 200.0, &c, &l, 1.0, 0.1);
        assert_eq!(s.fuel_rate, c.idle_rate);
    }

    #[test]
    fn idle_and_cruise_totals() {
        let s = crate::testkit::golden::single_intersection();
        let pt = Powertrain::new(&s);
        let n = 90;
        let idle = rollout(0.0, &vec![0.0; n], 1.0).unwrap();
        let f = trajectory_fuel(&idle, &pt, 0.0);
        assert_relative_eq!(f.total_grams, s.fuel_curve.idle_rate * 90.0, epsilon = 1e-9);

        let cruise = rollout(12.0, &vec![0.0; n], 1.0).unwrap();
        let f = trajectory_fuel(&cruise, &pt, 0.0);
        let steady = pt.sample(pt.traction_power(12.0, 0.0), pt.torque_at(12.0, 0.0), 1.0);
        assert_relative_eq!(f.total_grams, 90.0 * steady.fuel_rate, epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn power_is_linear_in_accel(v in 0.0..30.0f64, a1 in -3.0..3.0f64, a2 in -3.0..3.0f64) {
            let p = vehicle();
            let d = traction_power(v, a2, &p) - traction_power(v, a1, &p);
            prop_assert!((d - p.mass * v * (a2 - a1)).abs() <= 1e-9 * (1.0 + d.abs()));
        }

        #[test]
        fn fuel_rate_monotone_and_floored(p1 in -50_000.0..150_000.0f64, dp in 0.0..50_000.0f64) {
            let c = FuelCurve::synthetic_default();
            let l = BsfcLine::synthetic_default();
            let q1 = fuel_rate(p1, 0.0, &c, &l, 0.9, 1.0).fuel_rate;
            let q2 = fuel_rate(p1 + dp, 0.0, &c, &l, 0.9, 1.0).fuel_rate;
            prop_assert!(q1 >= c.idle_rate);
            if p1 >= 0.0 {
                prop_assert!(q2 >= q1 - 1e-12);
            }
        }
    }
}
