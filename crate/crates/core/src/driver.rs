//! Rule-based human driver at signalized intersections.
//!
//! Speed changes follow the polynomial profile `a = ra_m θ (1 - θ^m)^2`
//! over a maneuver of duration `t`, with `θ = elapsed / t`. Each step applies
//! the profile's mean acceleration over the step, so sampled speeds equal the
//! continuous profile exactly.

use serde::{Deserialize, Serialize};

use crate::kinematics::{rollout_unchecked, Trajectory};
use crate::scenario::{Intersection, Scenario};
use crate::signals::turn_speed_limits;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverParams {
    pub m_accel: f64,
    pub m_decel: f64,
    /// Distance to the stop line inside which a red light triggers braking.
    pub reaction_distance: f64,
}

impl Default for DriverParams {
    fn default() -> Self {
        Self {
            m_accel: 9.1244,
            m_decel: -0.7193,
            reaction_distance: 150.0,
        }
    }
}

/// Peak-ratio factor `ra_m` for a speed change `dv` over `duration`.
pub fn peak_ratio(m: f64, dv: f64, duration: f64) -> f64 {
    2.0 * (m + 1.0) * (m + 2.0) / (m * m) * dv.abs() / duration
}

/// Profile acceleration at relative time `theta`, signed by the maneuver
/// direction. Zero at both ends; for negative `m` the `theta -> 0` limit is
/// singular and is taken as zero.
pub fn maneuver_accel(theta: f64, m: f64, ra_m: f64) -> f64 {
    if theta <= 0.0 || theta >= 1.0 {
        return 0.0;
    }
    ra_m * theta * (1.0 - theta.powf(m)).powi(2)
}

/// `∫_0^θ s (1 - s^m)^2 ds`.
pub fn profile_integral(theta: f64, m: f64) -> f64 {
    let t = theta.clamp(0.0, 1.0);
    if t == 0.0 {
        return 0.0;
    }
    t * t / 2.0 - 2.0 * t.powf(m + 2.0) / (m + 2.0) + t.powf(2.0 * m + 2.0) / (2.0 * m + 2.0)
}

/// Desired acceleration time (s).
pub fn acceleration_time(v_i: f64, v_f: f64) -> f64 {
    let dv = v_f - v_i;
    if dv <= 0.0 {
        return 0.0;
    }
    dv / (0.5778 + 0.0669 * dv.sqrt() - 0.0182 * v_i)
}

/// Desired acceleration distance (m).
pub fn acceleration_distance(v_i: f64, v_f: f64, t_a: f64) -> f64 {
    (0.467 + 0.0072 * v_f - 0.0076 * v_i) * (v_f + v_i) * t_a
}

/// Desired deceleration time (s) over distance `x_d`.
pub fn deceleration_time(v_i: f64, v_f: f64, x_d: f64) -> f64 {
    let den = (0.473 + 0.0056 * v_i - 0.0049 * v_f) * (v_f + v_i);
    if den <= 0.0 {
        0.0
    } else {
        x_d / den
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManeuverTimes {
    pub duration: f64,
    pub distance: f64,
}

/// Duration and distance of a speed change: acceleration uses the desired
/// time and distance formulas; deceleration takes `x_d` as its distance.
pub fn maneuver_times(v_i: f64, v_f: f64, x_d: Option<f64>) -> ManeuverTimes {
    if v_f >= v_i {
        let t = acceleration_time(v_i, v_f);
        ManeuverTimes {
            duration: t,
            distance: acceleration_distance(v_i, v_f, t),
        }
    } else {
        let x = x_d.unwrap_or(0.0);
        ManeuverTimes {
            duration: deceleration_time(v_i, v_f, x),
            distance: x,
        }
    }
}

/// A speed change from `v_i` to `v_f` started at `start`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Maneuver {
    start: f64,
    duration: f64,
    m: f64,
    v_i: f64,
    v_f: f64,
}

impl Maneuver {
    fn speed_at(&self, t: f64) -> f64 {
        if self.duration <= 0.0 {
            return self.v_f;
        }
        let theta = (t - self.start) / self.duration;
        let frac = profile_integral(theta, self.m) / profile_integral(1.0, self.m);
        self.v_i + (self.v_f - self.v_i) * frac
    }

    fn done(&self, t: f64) -> bool {
        t >= self.start + self.duration - 1e-9
    }
}

/// Trapezoid distance covered by sampled speeds until the profile ends.
fn sampled_distance(speed: impl Fn(f64) -> f64, dt: f64, end: f64) -> f64 {
    let n = (end / dt).ceil() as usize;
    let mut d = 0.0;
    let mut prev = speed(0.0);
    for k in 1..=n {
        let v = speed(k as f64 * dt);
        d += 0.5 * (prev + v) * dt;
        prev = v;
    }
    d
}

/// Bracket `(lo, hi)` around the root of an increasing `f` with
/// `f(lo) <= 0 < f(hi)`.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Braking {
    Profile(Maneuver),
    /// Constant deceleration after the profile would exceed the limit.
    Constant {
        rate: f64,
        target: f64,
    },
}

/// Plan a slowdown from `v_i` to `v_f` covering `x_d` in sampled motion.
/// The profile duration is solved so the sampled distance matches `x_d`;
/// when the profile needs braking harder than `a_min` the planner falls back
/// to constant deceleration, beyond `a_min` if that is what stopping takes.
fn plan_braking(start: f64, v_i: f64, v_f: f64, x_d: f64, m: f64, dt: f64, a_min: f64) -> Braking {
    let profile = |dur: f64| Maneuver {
        start: 0.0,
        duration: dur,
        m,
        v_i,
        v_f,
    };
    let dist = |dur: f64| {
        let p = profile(dur);
        sampled_distance(|t| p.speed_at(t), dt, dur) + v_f * ((dur / dt).ceil() * dt - dur)
    };
    let nominal = deceleration_time(v_i, v_f, x_d);
    let hi = nominal.max(dt) * 10.0 + 10.0 * dt;
    let dur = if dist(hi) > x_d && dist(1e-6) < x_d {
        bisect(1e-6, hi, |d| dist(d) - x_d).0
    } else {
        nominal
    };
    let p = Maneuver {
        start,
        duration: dur,
        m,
        v_i,
        v_f,
    };
    let n = (dur / dt).ceil() as usize;
    let peak = (0..n)
        .map(|k| (p.speed_at(start + (k + 1) as f64 * dt) - p.speed_at(start + k as f64 * dt)) / dt)
        .fold(0.0, f64::min);
    if dur > 0.0 && peak >= a_min - 1e-9 && (dist(dur) - x_d).abs() < 1e-3 {
        return Braking::Profile(p);
    }
    // constant deceleration, the last step clipped at the target speed
    let const_dist = |rate: f64| {
        let mut v = v_i;
        let mut d = 0.0;
        while v > v_f + 1e-12 {
            let vn = (v + rate * dt).max(v_f);
            d += 0.5 * (v + vn) * dt;
            v = vn;
        }
        d
    };
    // gentlest rate that stops short of the line, past a_min if need be
    let (lo, hi) = if const_dist(a_min) <= x_d {
        (1e-9, -a_min)
    } else {
        (-a_min, 1e3)
    };
    let rate = -bisect(lo, hi, |b| x_d - const_dist(-b)).1;
    Braking::Constant { rate, target: v_f }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    Cruise { speed: f64 },
    Accel(Maneuver),
    Brake(Braking),
}

/// Overshoot of a stop line still treated as standing at it.
const LINE_TOL: f64 = 1e-3;

/// Braking to a stop, or standing still.
fn halting(mode: Mode) -> bool {
    match mode {
        Mode::Brake(Braking::Profile(m)) => m.v_f == 0.0,
        Mode::Brake(Braking::Constant { target, .. }) => target == 0.0,
        Mode::Cruise { speed } => speed == 0.0,
        Mode::Accel(_) => false,
    }
}

fn green_at(int: &Intersection, t: f64) -> bool {
    int.windows.iter().any(|w| t >= w.t_r2g && t < w.t_g2r)
}

/// Simulate the driver over the scenario horizon.
pub fn simulate_driver(s: &Scenario) -> Trajectory {
    simulate_driver_with(s, &DriverParams::default())
}

pub fn simulate_driver_with(s: &Scenario, p: &DriverParams) -> Trajectory {
    let h = &s.horizon;
    let dt = h.time_step;
    let n = h.steps();
    let v_max = h.speed_limit;
    let turn_speed: Vec<Option<f64>> = s
        .intersections
        .iter()
        .map(|i| i.turn.as_ref().map(|t| turn_speed_limits(t).v_turn.min(v_max)))
        .collect();

    let mut v = h.initial_speed;
    let mut d = 0.0;
    let mut next = 0usize;
    let mut mode = if v < v_max - 1e-9 {
        Mode::Accel(accel_to(0.0, v, v_max, p))
    } else {
        Mode::Cruise { speed: v }
    };
    let mut a = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * dt;
        while next < s.intersections.len() && d > s.intersections[next].position + LINE_TOL && !halting(mode) {
            next += 1;
            // past the stop line: resume toward the speed limit
            if v < v_max - 1e-9 && !matches!(mode, Mode::Accel(m) if (m.v_f - v_max).abs() < 1e-9) {
                mode = Mode::Accel(accel_to(t, v, v_max, p));
            }
        }
        if let Some(int) = s.intersections.get(next) {
            let gap = int.position - d;
            let target = turn_speed[next];
            if gap <= p.reaction_distance {
                let red = !green_at(int, t);
                let stopping = halting(mode) && !matches!(mode, Mode::Cruise { .. });
                let stopped = matches!(mode, Mode::Cruise { speed } if speed == 0.0);
                let v_f = target.unwrap_or(v_max);
                if red {
                    if !stopping && !stopped {
                        mode = if v > 1e-9 {
                            Mode::Brake(plan_braking(t, v, 0.0, gap.max(0.0), p.m_decel, dt, h.accel_min))
                        } else {
                            Mode::Cruise { speed: 0.0 }
                        };
                    }
                } else if stopping || stopped {
                    mode = if v < v_f - 1e-9 {
                        Mode::Accel(accel_to(t, v, v_f, p))
                    } else {
                        Mode::Cruise { speed: v }
                    };
                } else if let Some(vt) = target {
                    let slowing = matches!(mode, Mode::Brake(_));
                    if v > vt + 1e-9 && !slowing && gap > 1e-6 {
                        mode = Mode::Brake(plan_braking(t, v, vt, gap, p.m_decel, dt, h.accel_min));
                    }
                }
            }
        }
        let (v_next, new_mode) = advance(mode, t, v, dt);
        mode = new_mode;
        let v_next = v_next.clamp(0.0, v_max);
        let acc = (v_next - v) / dt;
        a.push(acc);
        d += 0.5 * (v + v_next) * dt;
        v = v_next;
    }
    rollout_unchecked(h.initial_speed, &a, dt)
}

fn accel_to(start: f64, v_i: f64, v_f: f64, p: &DriverParams) -> Maneuver {
    Maneuver {
        start,
        duration: acceleration_time(v_i, v_f),
        m: p.m_accel,
        v_i,
        v_f,
    }
}

/// Speed at the end of the step starting at `t`, and the mode afterwards.
fn advance(mode: Mode, t: f64, v: f64, dt: f64) -> (f64, Mode) {
    let t1 = t + dt;
    match mode {
        Mode::Cruise { speed } => (speed, mode),
        Mode::Accel(m) | Mode::Brake(Braking::Profile(m)) => {
            let v1 = m.speed_at(t1);
            if m.done(t1) {
                (m.v_f, Mode::Cruise { speed: m.v_f })
            } else {
                (v1, mode)
            }
        }
        Mode::Brake(Braking::Constant { rate, target }) => {
            let v1 = (v + rate * dt).max(target);
            if v1 <= target + 1e-12 {
                (target, Mode::Cruise { speed: target })
            } else {
                (v1, mode)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::GreenWindow;
    use crate::testkit::golden;
    use approx::assert_relative_eq;

    #[test]
    fn profile_endpoints() {
        for m in [9.1244, -0.7193] {
            assert_eq!(maneuver_accel(0.0, m, 1.0), 0.0);
            assert_eq!(maneuver_accel(1.0, m, 1.0), 0.0);
        }
    }

    #[test]
    fn closed_form_integral_matches_formula_at_one() {
        for m in [9.1244, -0.7193, 2.0] {
            let f1 = profile_integral(1.0, m);
            assert_relative_eq!(f1, m * m / (2.0 * (m + 1.0) * (m + 2.0)), max_relative = 1e-12);
        }
    }

    #[test]
    fn equal_speeds_take_no_time() {
        assert_eq!(acceleration_time(10.0, 10.0), 0.0);
        assert_eq!(maneuver_times(10.0, 10.0, None).duration, 0.0);
    }

    #[test]
    fn desired_times_by_hand() {
        // 17.88 / (0.5778 + 0.0669 sqrt(17.88))
        let t = acceleration_time(0.0, 17.88);
        let by_hand = 17.88 / (0.5778 + 0.0669 * 4.228_474_902_373_3);
        assert_relative_eq!(t, by_hand, max_relative = 1e-9);
        let td = deceleration_time(17.88, 0.0, 100.0);
        assert_relative_eq!(td, 100.0 / (0.473 + 0.0056 * 17.88) / 17.88, max_relative = 1e-12);
    }

    #[test]
    fn all_green_cruises() {
        let mut s = golden::single_intersection();
        s.intersections[0].windows = vec![GreenWindow::new(-1.0, 200.0)];
        let t = simulate_driver(&s);
        assert!(t.v.iter().all(|&v| (v - 17.88).abs() < 1e-12));
    }

    #[test]
    fn red_approach_stops_at_line() {
        let mut s = golden::single_intersection();
        s.intersections[0].windows = vec![GreenWindow::new(60.0, 120.0)];
        let t = simulate_driver(&s);
        let stop = t.v.iter().position(|&v| v == 0.0).unwrap();
        assert!((t.d[stop] - 400.0).abs() < 0.5, "{}", t.d[stop]);
        assert!(t.position_at(59.0) <= 400.0 + 1e-9);
        // waits, then leaves after the light turns green
        assert!(t.v[61] > 0.0 && t.v[60] == 0.0);
    }
}
