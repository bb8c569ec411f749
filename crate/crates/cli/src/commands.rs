//! Subcommand implementations. Each command computes everything first, checks
//! the trajectories it is about to emit, and only then writes files.

use std::path::Path;

use greenwave_core::dp::comparison_scenario;
use greenwave_core::metrics::percent_delta;
use greenwave_core::scp::trajectory_feasible;
use greenwave_core::testkit::gen_random_scenario;
use greenwave_core::{
    dp_solve, evaluate_true_objective, load_scenario, run_metrics, search, simulate_driver, trajectory_fuel,
    turn_speed_limits, ObjectiveBreakdown, Powertrain, RunMetrics, Scenario, SearchOutcome, Trajectory,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::CliError;
use crate::output::{csv_rows, trajectory_csv, Artifacts};
use crate::{InputArgs, RunArgs, SweepArgs};

/// Slack allowed when re-checking solver output against hard bounds.
const CHECK_TOL: f64 = 1e-6;

pub fn load(input: &InputArgs, no_turn: bool) -> Result<Scenario, CliError> {
    let s = match (&input.scenario, input.seed) {
        (Some(path), _) => load_scenario(path)?,
        (None, Some(seed)) => gen_random_scenario(seed),
        (None, None) => return Err(CliError::Usage("either --scenario or --seed is required".into())),
    };
    Ok(if no_turn { s.without_turns() } else { s })
}

/// Metrics document written for every engine run.
#[derive(Debug, Clone, Serialize)]
pub struct EngineSummary {
    pub engine: &'static str,
    pub scenario: String,
    /// Window index per intersection, for engines that choose one.
    pub selection: Option<Vec<usize>>,
    pub objective: ObjectiveBreakdown,
    pub max_accel: f64,
    pub crossing_speeds: Vec<Option<f64>>,
    pub metrics: RunMetrics,
}

fn summarize(engine: &'static str, s: &Scenario, traj: &Trajectory, selection: Option<Vec<usize>>) -> EngineSummary {
    EngineSummary {
        engine,
        scenario: s.name.clone(),
        selection,
        objective: evaluate_true_objective(traj, s),
        max_accel: traj.a.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        crossing_speeds: s
            .intersections
            .iter()
            .map(|i| traj.crossing(i.position).map(|c| c.speed))
            .collect(),
        metrics: run_metrics(traj, s),
    }
}

fn check_shape(engine: &str, traj: &Trajectory, s: &Scenario) -> Result<(), CliError> {
    let n = s.horizon.steps();
    let finite = traj.a.iter().chain(&traj.v).chain(&traj.d).all(|x| x.is_finite());
    if traj.a.len() != n || traj.v.len() != n + 1 || traj.d.len() != n + 1 || !finite {
        return Err(CliError::Internal(format!("{engine}: malformed trajectory")));
    }
    let v_max = s.horizon.speed_limit;
    if let Some(k) = traj.v.iter().position(|&v| v < -CHECK_TOL || v > v_max + CHECK_TOL) {
        return Err(CliError::Internal(format!(
            "{engine}: speed {} m/s at sample {k} outside [0, {v_max}]",
            traj.v[k]
        )));
    }
    Ok(())
}

/// Acceleration bounds, green crossings and turning speed caps.
fn check_planned(engine: &str, traj: &Trajectory, s: &Scenario) -> Result<(), CliError> {
    check_shape(engine, traj, s)?;
    let h = &s.horizon;
    if let Some(k) = traj
        .a
        .iter()
        .position(|&a| a < h.accel_min - CHECK_TOL || a > h.accel_max + CHECK_TOL)
    {
        return Err(CliError::Internal(format!(
            "{engine}: acceleration {} at step {k} out of bounds",
            traj.a[k]
        )));
    }
    for (m, int) in s.intersections.iter().enumerate() {
        let Some(c) = traj.crossing(int.position) else { continue };
        let green = int
            .windows
            .iter()
            .any(|w| c.time >= w.t_r2g - CHECK_TOL && c.time <= w.t_g2r + CHECK_TOL);
        if !green {
            return Err(CliError::Internal(format!(
                "{engine}: crosses intersection {m} on red at {:.3} s",
                c.time
            )));
        }
        if let Some(turn) = &int.turn {
            let cap = turn_speed_limits(turn).v_turn;
            if c.speed > cap + CHECK_TOL {
                return Err(CliError::Internal(format!(
                    "{engine}: turns at intersection {m} at {:.3} m/s above {cap:.3}",
                    c.speed
                )));
            }
        }
    }
    Ok(())
}

fn optimize_run(s: &Scenario) -> Result<SearchOutcome, CliError> {
    let out = search(s)?;
    let best = &out.best;
    check_planned("optimizer", &best.trajectory, s)?;
    if !trajectory_feasible(&best.trajectory, s, &best.selection, CHECK_TOL) {
        return Err(CliError::Internal(
            "optimizer: trajectory fails the feasibility re-check".into(),
        ));
    }
    Ok(out)
}

fn engine_files(art: &mut Artifacts, dir: &str, s: &Scenario, traj: &Trajectory, summary: &EngineSummary) {
    let fuel = trajectory_fuel(traj, &Powertrain::new(s), s.horizon.initial_accel);
    art.add(format!("{dir}/trajectory.csv"), trajectory_csv(traj, &fuel));
    art.add_json(format!("{dir}/metrics.json"), summary);
}

fn finish(art: Artifacts, out: &Path, mut lines: Vec<String>) -> Result<Vec<String>, CliError> {
    art.write_to(out)?;
    lines.extend(art.paths().map(|p| format!("wrote {}", out.join(p).display())));
    Ok(lines)
}

fn headline(s: &EngineSummary) -> String {
    format!(
        "{}: fuel {:.2} g, travel time {:.2} s, objective {:.4}",
        s.engine, s.metrics.fuel, s.metrics.travel_time, s.objective.total
    )
}

fn optimizer_files(art: &mut Artifacts, s: &Scenario, out: &SearchOutcome) -> EngineSummary {
    let best = &out.best;
    let summary = summarize("optimizer", s, &best.trajectory, Some(best.selection.0.clone()));
    engine_files(art, "optimize", s, &best.trajectory, &summary);
    art.add_json("optimize/convergence.json", &best.report);
    art.add_json("optimize/search_log.json", &out.log);
    summary
}

pub fn optimize(a: &RunArgs) -> Result<Vec<String>, CliError> {
    let s = load(&a.input, a.no_turn)?;
    let out = optimize_run(&s)?;
    let mut art = Artifacts::default();
    let summary = optimizer_files(&mut art, &s, &out);
    finish(art, &a.out, vec![headline(&summary)])
}

fn baseline_summary(art: &mut Artifacts, s: &Scenario) -> Result<EngineSummary, CliError> {
    let traj = simulate_driver(s);
    check_shape("baseline", &traj, s)?;
    let summary = summarize("baseline", s, &traj, None);
    engine_files(art, "baseline", s, &traj, &summary);
    Ok(summary)
}

pub fn baseline(a: &RunArgs) -> Result<Vec<String>, CliError> {
    let s = load(&a.input, a.no_turn)?;
    let mut art = Artifacts::default();
    let summary = baseline_summary(&mut art, &s)?;
    finish(art, &a.out, vec![headline(&summary)])
}

fn dp_summary(art: &mut Artifacts, s: &Scenario) -> Result<(EngineSummary, f64), CliError> {
    let sol = dp_solve(s)?;
    check_planned("dp", &sol.trajectory, s)?;
    let mut summary = summarize("dp", s, &sol.trajectory, None);
    summary.objective = sol.objective;
    engine_files(art, "dp", s, &sol.trajectory, &summary);
    Ok((summary, sol.objective.total))
}

pub fn dp(a: &RunArgs) -> Result<Vec<String>, CliError> {
    let s = load(&a.input, a.no_turn)?;
    let mut art = Artifacts::default();
    let (summary, _) = dp_summary(&mut art, &s)?;
    finish(art, &a.out, vec![headline(&summary)])
}

/// Reductions relative to the driver; positive values are savings.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Reduction {
    pub fuel_pct: f64,
    pub travel_time_pct: f64,
}

impl Reduction {
    fn of(engine: &EngineSummary, reference: &EngineSummary) -> Self {
        Self {
            fuel_pct: -percent_delta(engine.metrics.fuel, reference.metrics.fuel),
            travel_time_pct: -percent_delta(engine.metrics.travel_time, reference.metrics.travel_time),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CompareReport {
    pub scenario: String,
    pub optimizer: EngineSummary,
    pub baseline: EngineSummary,
    pub dp: Option<EngineSummary>,
    /// Why the dynamic program was skipped.
    pub dp_notice: Option<String>,
    pub optimizer_vs_baseline: Reduction,
    pub dp_vs_baseline: Option<Reduction>,
    /// `|J_opt - J_dp| / |J_dp|` with both scored on the scenario the grid
    /// models.
    pub optimizer_dp_gap: Option<f64>,
}

pub fn compare(a: &RunArgs) -> Result<Vec<String>, CliError> {
    let s = load(&a.input, a.no_turn)?;
    let out = optimize_run(&s)?;
    let mut art = Artifacts::default();
    let opt = optimizer_files(&mut art, &s, &out);
    let base = baseline_summary(&mut art, &s)?;
    let mut lines = vec![headline(&opt), headline(&base)];
    let (dp, dp_notice, gap) = match dp_summary(&mut art, &s) {
        Ok((summary, dp_total)) => {
            let scored = evaluate_true_objective(&out.best.trajectory, &comparison_scenario(&s)).total;
            lines.push(headline(&summary));
            (Some(summary), None, Some((scored - dp_total).abs() / dp_total.abs()))
        }
        Err(e) => {
            let notice = format!("dynamic program skipped: {e}");
            lines.push(notice.clone());
            (None, Some(notice), None)
        }
    };
    let report = CompareReport {
        scenario: s.name.clone(),
        optimizer_vs_baseline: Reduction::of(&opt, &base),
        dp_vs_baseline: dp.as_ref().map(|d| Reduction::of(d, &base)),
        optimizer: opt,
        baseline: base,
        dp,
        dp_notice,
        optimizer_dp_gap: gap,
    };
    lines.push(format!(
        "optimizer vs driver: fuel -{:.2}%, travel time -{:.2}%",
        report.optimizer_vs_baseline.fuel_pct, report.optimizer_vs_baseline.travel_time_pct
    ));
    if let Some(g) = gap {
        lines.push(format!("optimizer vs dp objective gap {:.2}%", 100.0 * g));
    }
    art.add_json("compare.json", &report);
    finish(art, &a.out, lines)
}

/// One sweep entry; numeric fields are empty when the run failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub w_t: f64,
    pub fuel: Option<f64>,
    pub travel_time: Option<f64>,
    pub max_accel: Option<f64>,
    pub error: Option<String>,
}

fn sweep_entry(s: &Scenario, w_t: f64) -> SweepRow {
    let s = s.with_time_weight(w_t);
    match optimize_run(&s) {
        Ok(out) => {
            let m = summarize("optimizer", &s, &out.best.trajectory, None);
            SweepRow {
                w_t,
                fuel: Some(m.metrics.fuel),
                travel_time: Some(m.metrics.travel_time),
                max_accel: Some(m.max_accel),
                error: None,
            }
        }
        Err(e) => SweepRow {
            w_t,
            fuel: None,
            travel_time: None,
            max_accel: None,
            error: Some(e.to_string()),
        },
    }
}

pub fn sweep(a: &SweepArgs) -> Result<Vec<String>, CliError> {
    if a.wt.len() < 2 {
        return Err(CliError::Usage("--wt needs at least two values".into()));
    }
    if let Some(bad) = a.wt.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(CliError::Usage(format!(
            "time weight {bad} must be finite and nonnegative"
        )));
    }
    let s = load(&a.run.input, a.run.no_turn)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs.max(1))
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let rows: Vec<SweepRow> = pool.install(|| a.wt.par_iter().map(|&w| sweep_entry(&s, w)).collect());
    let mut art = Artifacts::default();
    art.add("sweep.csv", csv_rows(&rows));
    art.add_json("sweep.json", &rows);
    let lines = rows
        .iter()
        .map(|r| match (&r.error, r.fuel, r.travel_time) {
            (Some(e), _, _) => format!("w_t {}: failed: {e}", r.w_t),
            (None, Some(f), Some(t)) => format!("w_t {}: fuel {f:.2} g, travel time {t:.2} s", r.w_t),
            _ => unreachable!("successful rows carry metrics"),
        })
        .collect();
    if rows.iter().all(|r| r.error.is_some()) {
        art.write_to(&a.run.out)?;
        return Err(CliError::Infeasible("every sweep entry failed".into()));
    }
    finish(art, &a.run.out, lines)
}
