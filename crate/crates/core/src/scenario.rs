//! Problem-instance data model and its JSON document format.
//!
//! A [`Scenario`] bundles everything a planner run needs: vehicle and
//! powertrain parameters, the horizon and its kinematic limits, the
//! intersections with their green windows, objective weights and solver
//! settings. Documents are parsed with [`parse_scenario`], which applies the
//! documented defaults and rejects any instance that fails
//! [`validate_scenario`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;

/// Current document schema version.
pub const SCHEMA_VERSION: u32 = 1;

/// Longitudinal vehicle parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    /// Vehicle mass (kg).
    pub mass: f64,
    /// Rolling-resistance coefficient.
    pub rolling_resistance: f64,
    /// Air density (kg/m³).
    pub air_density: f64,
    pub drag_coefficient: f64,
    /// Frontal area (m²).
    pub frontal_area: f64,
    /// Road grade (rad).
    #[serde(default)]
    pub grade: f64,
    /// Head-wind speed (m/s).
    #[serde(default)]
    pub wind_speed: f64,
    /// Driveline efficiency in (0, 1].
    pub transmission_efficiency: f64,
    // The three ratios below are carried for completeness; the ideal-CVT
    // power model never reads them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gear_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_drive_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wheel_radius: Option<f64>,
}

/// Best-BSFC operating line `omega = intercept / (1 - slope * torque)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BsfcLine {
    /// Slope `k` (1/(N·m)).
    pub slope: f64,
    /// Intercept `b` (rad/s), the engine speed at zero torque.
    pub intercept: f64,
    /// Upper end of the admissible torque range (N·m).
    pub max_torque: f64,
}

/// Static fuel rate as a piecewise-linear function of engine power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuelCurve {
    /// `[engine power (W), fuel rate (g/s)]` pairs, strictly increasing in
    /// power and starting at zero power.
    pub breakpoints: Vec<[f64; 2]>,
    /// Fuel rate with the engine idling (g/s).
    pub idle_rate: f64,
    /// Transient coefficient `k_e` (g per N·m) applied to the engine torque
    /// rate.
    #[serde(default)]
    pub transient_coefficient: f64,
}

/// A green phase `(t_r2g, t_g2r)`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct GreenWindow {
    /// Red-to-green instant (s).
    pub t_r2g: f64,
    /// Green-to-red instant (s).
    pub t_g2r: f64,
}

impl GreenWindow {
    pub fn new(t_r2g: f64, t_g2r: f64) -> Self {
        Self { t_r2g, t_g2r }
    }

    /// True when `t` lies strictly inside the window.
    pub fn contains_strict(&self, t: f64) -> bool {
        t > self.t_r2g && t < self.t_g2r
    }

    pub fn shifted(&self, offset: f64) -> Self {
        Self::new(self.t_r2g + offset, self.t_g2r + offset)
    }
}

impl From<[f64; 2]> for GreenWindow {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<GreenWindow> for [f64; 2] {
    fn from(w: GreenWindow) -> Self {
        [w.t_r2g, w.t_g2r]
    }
}

/// Turning movement through an intersection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnSpec {
    /// Turning radius (m).
    pub radius: f64,
    /// Tyre-road friction coefficient.
    pub friction: f64,
    /// Comfortable lateral acceleration (m/s²).
    pub lateral_accel: f64,
    /// Longitudinal acceleration bounds while turning (m/s²).
    pub accel_min: f64,
    pub accel_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intersection {
    /// Stop-line position along the route (m).
    pub position: f64,
    pub windows: Vec<GreenWindow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn: Option<TurnSpec>,
}

/// Objective weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    /// Fuel weight (per gram).
    #[serde(default = "one")]
    pub fuel: f64,
    /// Time weight, applied to the horizon-mean speed ((m/s)⁻¹ scale).
    pub time: f64,
    /// Comfort weight.
    #[serde(default = "one")]
    pub comfort: f64,
    /// Jerk-to-acceleration ratio inside the comfort term.
    #[serde(default = "one")]
    pub jerk: f64,
}

/// Planning horizon and kinematic limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Horizon {
    /// Horizon length (s).
    pub duration: f64,
    /// Sample time (s).
    #[serde(default = "one")]
    pub time_step: f64,
    pub initial_speed: f64,
    pub speed_limit: f64,
    pub accel_min: f64,
    pub accel_max: f64,
    /// Jerk limits (m/s³); the per-step bound is `jerk * time_step`.
    pub jerk_min: f64,
    pub jerk_max: f64,
    /// Acceleration applied just before the horizon starts (m/s²).
    #[serde(default)]
    pub initial_accel: f64,
}

impl Horizon {
    /// Number of control steps `T / Δt`.
    pub fn steps(&self) -> usize {
        (self.duration / self.time_step).round() as usize
    }

    /// Per-step bounds on `a(k) - a(k-1)`.
    pub fn jerk_step_bounds(&self) -> (f64, f64) {
        (self.jerk_min * self.time_step, self.jerk_max * self.time_step)
    }
}

/// Sequential convex optimization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScpConfig {
    /// Speed trust radius (m/s).
    pub trust_speed: f64,
    /// Acceleration trust radius (m/s²).
    pub trust_accel: f64,
    /// Stop once the improvement distance falls below this.
    pub stop_threshold: f64,
    pub max_iterations: usize,
    /// Crossing-time jump (in samples) that triggers a reinitialization.
    pub reinit_threshold: f64,
    /// Slope of the turning soft penalties.
    pub soft_slope: f64,
    /// Position margin (m) used to enforce the strict crossing inequalities.
    pub crossing_margin: f64,
}

impl Default for ScpConfig {
    fn default() -> Self {
        Self {
            trust_speed: 1.0,
            trust_accel: 0.5,
            stop_threshold: 0.05,
            max_iterations: 50,
            reinit_threshold: 2.0,
            soft_slope: 100.0,
            crossing_margin: 0.01,
        }
    }
}

/// How the dynamic-programming reference treats the jerk terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JerkMode {
    /// Drop the jerk penalty and jerk bounds from both the DP and the
    /// optimizer run it is compared against.
    Drop,
    /// Carry the previous acceleration in the DP state.
    Augment,
}

/// Dynamic-programming grid settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DpSettings {
    /// Distance grid spacing (m).
    pub distance_step: f64,
    /// Target speed grid spacing (m/s); snapped so the speed limit is a grid
    /// point.
    pub speed_step: f64,
    /// Target acceleration action spacing (m/s^2); snapped so one step
    /// changes the speed by a whole number of speed cells.
    pub accel_step: f64,
    /// Extra distance beyond the farthest reachable point (m).
    pub distance_margin: f64,
    pub jerk_mode: JerkMode,
    /// Refuse grids whose cost-to-go tables exceed this size (MiB).
    pub memory_cap_mib: f64,
}

impl Default for DpSettings {
    fn default() -> Self {
        Self {
            distance_step: 2.0,
            speed_step: 0.25,
            accel_step: 0.25,
            distance_margin: 10.0,
            jerk_mode: JerkMode::Drop,
            memory_cap_mib: 1024.0,
        }
    }
}

/// A complete problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub vehicle: VehicleParams,
    pub bsfc_line: BsfcLine,
    pub fuel_curve: FuelCurve,
    pub horizon: Horizon,
    pub weights: Weights,
    #[serde(default)]
    pub solver: ScpConfig,
    #[serde(default)]
    pub intersections: Vec<Intersection>,
    #[serde(default)]
    pub dp: DpSettings,
}

fn one() -> f64 {
    1.0
}

impl Scenario {
    /// Copy with every green window shifted by `offset` seconds.
    pub fn with_signal_offset(&self, offset: f64) -> Self {
        let mut s = self.clone();
        for int in &mut s.intersections {
            for w in &mut int.windows {
                *w = w.shifted(offset);
            }
        }
        s
    }

    /// Copy with all turning movements removed.
    pub fn without_turns(&self) -> Self {
        let mut s = self.clone();
        for int in &mut s.intersections {
            int.turn = None;
        }
        s
    }

    pub fn with_time_weight(&self, w_t: f64) -> Self {
        let mut s = self.clone();
        s.weights.time = w_t;
        s
    }

    pub fn has_turns(&self) -> bool {
        self.intersections.iter().any(|i| i.turn.is_some())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// One failed invariant, addressed by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Parse a scenario document, apply defaults and validate it.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Schema {
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    let violations = validate_scenario(&scenario);
    if violations.is_empty() {
        Ok(scenario)
    } else {
        Err(ScenarioError::Validation(violations))
    }
}

/// Read and parse a scenario file.
pub fn load_scenario(path: &std::path::Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_scenario(&text)
}

/// Check every invariant of the data model. Returns all violations found.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut check = |ok: bool, field: &str, msg: String| {
        if !ok {
            out.push(Violation::new(field, msg));
        }
    };

    check(
        s.schema_version == SCHEMA_VERSION,
        "schema_version",
        format!("unsupported version {} (expected {SCHEMA_VERSION})", s.schema_version),
    );

    let v = &s.vehicle;
    check(v.mass > 0.0, "vehicle.mass", format!("must be > 0, got {}", v.mass));
    check(
        v.transmission_efficiency > 0.0 && v.transmission_efficiency <= 1.0,
        "vehicle.transmission_efficiency",
        format!("must lie in (0, 1], got {}", v.transmission_efficiency),
    );
    for (name, val) in [
        ("vehicle.air_density", v.air_density),
        ("vehicle.drag_coefficient", v.drag_coefficient),
        ("vehicle.frontal_area", v.frontal_area),
        ("vehicle.rolling_resistance", v.rolling_resistance),
    ] {
        check(val >= 0.0, name, format!("must be >= 0, got {val}"));
    }
    check(v.grade.is_finite(), "vehicle.grade", "must be finite".into());
    check(v.wind_speed.is_finite(), "vehicle.wind_speed", "must be finite".into());

    let line = &s.bsfc_line;
    check(
        line.intercept > 0.0,
        "bsfc_line.intercept",
        format!("must be > 0, got {}", line.intercept),
    );
    check(
        line.max_torque > 0.0,
        "bsfc_line.max_torque",
        format!("must be > 0, got {}", line.max_torque),
    );
    check(
        1.0 - line.slope * line.max_torque > 0.0 && 1.0 - line.slope * 0.0 > 0.0,
        "bsfc_line.slope",
        "1 - slope * torque must stay positive over [0, max_torque]".into(),
    );

    let fc = &s.fuel_curve;
    check(
        fc.idle_rate > 0.0,
        "fuel_curve.idle_rate",
        format!("must be > 0 (no engine stop-start), got {}", fc.idle_rate),
    );
    if fc.breakpoints.is_empty() {
        check(
            false,
            "fuel_curve.breakpoints",
            "at least one breakpoint required".into(),
        );
    } else {
        let first = fc.breakpoints[0];
        check(
            first[0] == 0.0,
            "fuel_curve.breakpoints[0]",
            format!("first breakpoint must be at zero power, got {}", first[0]),
        );
        check(
            (first[1] - fc.idle_rate).abs() <= 1e-12,
            "fuel_curve.breakpoints[0]",
            format!(
                "rate at zero power ({}) must equal idle_rate ({})",
                first[1], fc.idle_rate
            ),
        );
        for (i, pair) in fc.breakpoints.windows(2).enumerate() {
            let field = format!("fuel_curve.breakpoints[{}]", i + 1);
            check(
                pair[1][0] > pair[0][0],
                &field,
                "power breakpoints must be strictly increasing".into(),
            );
            check(
                pair[1][1] >= pair[0][1],
                &field,
                "fuel rate must be non-decreasing".into(),
            );
        }
    }
    check(
        fc.transient_coefficient >= 0.0,
        "fuel_curve.transient_coefficient",
        "must be >= 0".into(),
    );

    let h = &s.horizon;
    check(
        h.duration > 0.0,
        "horizon.duration",
        format!("must be > 0, got {}", h.duration),
    );
    check(
        h.time_step > 0.0,
        "horizon.time_step",
        format!("must be > 0, got {}", h.time_step),
    );
    if h.duration > 0.0 && h.time_step > 0.0 {
        let ratio = h.duration / h.time_step;
        check(
            (ratio - ratio.round()).abs() <= 1e-9 && ratio.round() >= 1.0,
            "horizon.time_step",
            format!(
                "duration {} is not a whole number of steps of {}",
                h.duration, h.time_step
            ),
        );
    }
    check(h.speed_limit > 0.0, "horizon.speed_limit", "must be > 0".into());
    check(
        h.initial_speed >= 0.0 && h.initial_speed <= h.speed_limit,
        "horizon.initial_speed",
        format!("must lie in [0, {}], got {}", h.speed_limit, h.initial_speed),
    );
    check(
        h.accel_min < 0.0 && h.accel_max > 0.0,
        "horizon.accel_min",
        "acceleration limits must satisfy accel_min < 0 < accel_max".into(),
    );
    check(
        h.jerk_min < 0.0 && h.jerk_max > 0.0,
        "horizon.jerk_min",
        "jerk limits must satisfy jerk_min < 0 < jerk_max".into(),
    );
    check(
        h.initial_accel >= h.accel_min && h.initial_accel <= h.accel_max,
        "horizon.initial_accel",
        "must lie within the acceleration limits".into(),
    );

    let w = &s.weights;
    for (name, val) in [
        ("weights.fuel", w.fuel),
        ("weights.time", w.time),
        ("weights.comfort", w.comfort),
        ("weights.jerk", w.jerk),
    ] {
        check(val >= 0.0 && val.is_finite(), name, format!("must be >= 0, got {val}"));
    }

    let c = &s.solver;
    for (name, val) in [
        ("solver.trust_speed", c.trust_speed),
        ("solver.trust_accel", c.trust_accel),
        ("solver.stop_threshold", c.stop_threshold),
        ("solver.reinit_threshold", c.reinit_threshold),
        ("solver.soft_slope", c.soft_slope),
        ("solver.crossing_margin", c.crossing_margin),
    ] {
        check(val > 0.0, name, format!("must be > 0, got {val}"));
    }
    check(c.max_iterations > 0, "solver.max_iterations", "must be > 0".into());

    let d = &s.dp;
    check(d.distance_step > 0.0, "dp.distance_step", "must be > 0".into());
    check(d.speed_step > 0.0, "dp.speed_step", "must be > 0".into());
    check(d.accel_step > 0.0, "dp.accel_step", "must be > 0".into());
    check(d.distance_margin >= 0.0, "dp.distance_margin", "must be >= 0".into());
    check(d.memory_cap_mib > 0.0, "dp.memory_cap_mib", "must be > 0".into());

    let mut prev_pos = 0.0;
    for (i, int) in s.intersections.iter().enumerate() {
        let base = format!("intersections[{i}]");
        check(
            int.position > prev_pos,
            &format!("{base}.position"),
            format!("positions must be > 0 and strictly increasing, got {}", int.position),
        );
        prev_pos = int.position;
        for (j, win) in int.windows.iter().enumerate() {
            check(
                win.t_r2g < win.t_g2r,
                &format!("{base}.windows[{j}]"),
                format!("window order: t_r2g ({}) must be < t_g2r ({})", win.t_r2g, win.t_g2r),
            );
        }
        for (j, pair) in int.windows.windows(2).enumerate() {
            check(
                pair[0].t_g2r <= pair[1].t_r2g,
                &format!("{base}.windows[{}]", j + 1),
                "windows must be time-ordered and non-overlapping".into(),
            );
        }
        let reachable = int.windows.iter().any(|win| win.t_g2r > 0.0 && win.t_r2g < h.duration);
        check(
            reachable,
            &format!("{base}.windows"),
            "no reachable window: no green window intersects the horizon".into(),
        );
        if let Some(t) = &int.turn {
            let tb = format!("{base}.turn");
            check(t.radius > 0.0, &format!("{tb}.radius"), "must be > 0".into());
            check(
                t.friction > 0.0 && t.friction <= 1.5,
                &format!("{tb}.friction"),
                "must lie in (0, 1.5]".into(),
            );
            check(
                t.lateral_accel > 0.0,
                &format!("{tb}.lateral_accel"),
                "must be > 0".into(),
            );
            check(
                t.accel_min <= t.accel_max,
                &format!("{tb}.accel_min"),
                "accel_min must not exceed accel_max".into(),
            );
        }
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::golden;

    #[test]
    fn golden_is_valid() {
        let s = golden::single_intersection();
        assert_eq!(validate_scenario(&s), vec![]);
        assert_eq!(s.horizon.speed_limit, 17.88);
        assert_eq!(s.horizon.duration, 90.0);
        assert_eq!((s.horizon.accel_min, s.horizon.accel_max), (-3.0, 3.0));
        assert_eq!((s.horizon.jerk_min, s.horizon.jerk_max), (-0.5, 0.5));
    }

    #[test]
    fn window_order_is_reported() {
        let mut s = golden::single_intersection();
        s.intersections[0].windows = vec![GreenWindow::new(40.0, 20.0)];
        let text = s.to_json();
        match parse_scenario(&text) {
            Err(ScenarioError::Validation(v)) => {
                assert!(v.iter().any(|x| x.message.contains("window order")), "{v:?}")
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn grade_and_wind_default_to_zero() {
        let s = golden::single_intersection();
        let mut doc: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        let veh = doc["vehicle"].as_object_mut().unwrap();
        veh.remove("grade");
        veh.remove("wind_speed");
        let parsed = parse_scenario(&doc.to_string()).unwrap();
        assert_eq!(parsed.vehicle.grade, 0.0);
        assert_eq!(parsed.vehicle.wind_speed, 0.0);
    }

    #[test]
    fn initial_speed_above_limit_is_one_violation() {
        let mut s = golden::single_intersection();
        s.horizon.initial_speed = s.horizon.speed_limit + 1.0;
        let v = validate_scenario(&s);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].field, "horizon.initial_speed");
    }

    #[test]
    fn window_before_start_is_unreachable() {
        let mut s = golden::single_intersection();
        s.intersections[0].windows = vec![GreenWindow::new(-50.0, -10.0)];
        let v = validate_scenario(&s);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].message.contains("no reachable window"));
    }

    #[test]
    fn schema_error_names_field() {
        let s = golden::single_intersection();
        let mut doc: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        doc["vehicle"]["mass"] = serde_json::Value::String("heavy".into());
        match parse_scenario(&doc.to_string()) {
            Err(ScenarioError::Schema { field, .. }) => assert_eq!(field, "vehicle.mass"),
            other => panic!("expected schema error, got {other:?}"),
        }
        doc["vehicle"]["mass"] = 1500.0.into();
        doc["vehicle"]["colour"] = "red".into();
        assert!(matches!(
            parse_scenario(&doc.to_string()),
            Err(ScenarioError::Schema { .. })
        ));
    }

    #[test]
    fn validate_is_pure() {
        let mut s = golden::single_intersection();
        s.horizon.time_step = 0.7;
        s.weights.fuel = -1.0;
        let before = s.clone();
        let a = validate_scenario(&s);
        let b = validate_scenario(&s);
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert_eq!(s, before);
    }

    #[test]
    fn overlapping_windows_rejected() {
        let mut s = golden::single_intersection();
        s.intersections[0].windows = vec![GreenWindow::new(0.0, 30.0), GreenWindow::new(20.0, 50.0)];
        let v = validate_scenario(&s);
        assert!(v.iter().any(|x| x.message.contains("non-overlapping")));
    }
}
