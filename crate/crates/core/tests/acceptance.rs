//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use greenwave_core::dp::{comparison_scenario, fuel_wait_curve};
use greenwave_core::driver::{maneuver_times, DriverParams};
use greenwave_core::metrics::quadratic_fit;
use greenwave_core::qp::solve_qp;
use greenwave_core::scp::trajectory_feasible;
use greenwave_core::signals::reachable_windows;
use greenwave_core::testkit::generator::free_flow_blocked;
use greenwave_core::testkit::{
    brute_force_best, driver_speed_change_quadrature, dual_gradient_qp, exhaustive_search, gen_random_scenario,
    gen_single_intersection, gen_toy_scenario, golden, random_qp,
};
use greenwave_core::{
    dp_solve, run_metrics, search, simulate_driver, solve_fixed_window, turn_speed_limits, DpError, Scenario, TurnSpec,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const PHASE_OFFSETS: [f64; 12] = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0, 55.0];
const TIME_WEIGHT_SWEEP: [f64; 5] = [1.0, 5.0, 20.0, 100.0, 2000.0];

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn turning_limits() -> Outcome {
    let l = turn_speed_limits(&TurnSpec {
        radius: 25.0,
        friction: 0.7,
        lateral_accel: 3.0,
        accel_min: 0.0,
        accel_max: 0.0,
    });
    check((l.v_safe - 13.1).abs() <= 0.05, || format!("v_safe {}", l.v_safe))?;
    check((l.v_comfort - 8.7).abs() <= 0.05, || {
        format!("v_comfort {}", l.v_comfort)
    })?;
    Ok(format!("v_safe {:.3} m/s, v_comfort {:.3} m/s", l.v_safe, l.v_comfort))
}

fn dp_gap_on(name: &str, s: &Scenario, worst: &mut (f64, Duration)) -> Result<(), String> {
    let s = comparison_scenario(s);
    let opt = search(&s).map_err(|e| format!("{name}: optimizer failed: {e}"))?;
    let t = Instant::now();
    let dp = dp_solve(&s).map_err(|e| format!("{name}: dp failed: {e}"))?;
    let elapsed = t.elapsed();
    let gap = (opt.best.objective.total - dp.objective.total).abs() / dp.objective.total.abs();
    check(gap <= 0.10, || format!("{name}: gap {:.2}%", 100.0 * gap))?;
    check(elapsed <= Duration::from_secs(300), || {
        format!("{name}: dp took {elapsed:?}")
    })?;
    worst.0 = worst.0.max(gap);
    worst.1 = worst.1.max(elapsed);
    Ok(())
}

fn scp_vs_dp() -> Outcome {
    let mut worst = (0.0, Duration::ZERO);
    dp_gap_on("golden", &golden::single_intersection(), &mut worst)?;
    for seed in 0..10 {
        dp_gap_on(&format!("seed {seed}"), &gen_single_intersection(seed), &mut worst)?;
    }
    Ok(format!(
        "11 scenarios, max gap {:.3}%, slowest dp {:.1?}",
        100.0 * worst.0,
        worst.1
    ))
}

fn driver_non_inferiority() -> Outcome {
    let base = golden::single_intersection();
    let (mut fuel_cut, mut time_cut) = (0.0, 0.0);
    for off in PHASE_OFFSETS {
        let s = base.with_signal_offset(off);
        let opt = search(&s).map_err(|e| format!("offset {off}: {e}"))?;
        let mo = run_metrics(&opt.best.trajectory, &s);
        let md = run_metrics(&simulate_driver(&s), &s);
        check(mo.fuel <= md.fuel, || {
            format!("offset {off}: fuel {:.3} > driver {:.3}", mo.fuel, md.fuel)
        })?;
        check(mo.travel_time <= md.travel_time + 1.0, || {
            format!(
                "offset {off}: travel time {:.2} > driver {:.2} + 1",
                mo.travel_time, md.travel_time
            )
        })?;
        fuel_cut += 100.0 * (md.fuel - mo.fuel) / md.fuel;
        time_cut += 100.0 * (md.travel_time - mo.travel_time) / md.travel_time;
    }
    let n = PHASE_OFFSETS.len() as f64;
    Ok(format!(
        "12 offsets, mean fuel reduction {:.1}%, mean travel-time reduction {:.1}%",
        fuel_cut / n,
        time_cut / n
    ))
}

fn crossing_speed(s: &Scenario) -> Result<f64, String> {
    let opt = search(s).map_err(|e| e.to_string())?;
    let x = s.intersections[0].position;
    opt.best
        .trajectory
        .crossing(x)
        .map(|c| c.speed)
        .ok_or_else(|| "no crossing".to_string())
}

fn turning_effect() -> Outcome {
    let base = golden::turning();
    let (mut with_sum, mut without_sum, mut free) = (0.0, 0.0, 0);
    let mut worst: f64 = 0.0;
    for off in PHASE_OFFSETS {
        let s = base.with_signal_offset(off);
        let v = crossing_speed(&s).map_err(|e| format!("offset {off}: {e}"))?;
        check(v <= 8.7 + 0.1, || {
            format!("offset {off}: crossing speed {v:.3} with turn")
        })?;
        worst = worst.max(v);
        let plain = s.without_turns();
        if !free_flow_blocked(&plain) {
            let vn = crossing_speed(&plain).map_err(|e| format!("offset {off} without turn: {e}"))?;
            check(vn > 8.7, || {
                format!("offset {off}: crossing speed {vn:.3} without turn")
            })?;
            with_sum += v;
            without_sum += vn;
            free += 1;
        }
    }
    check(free > 0, || "no free-flow offset tested".into())?;
    Ok(format!(
        "max turning crossing speed {worst:.3} m/s; without the turn {:.1}% higher on {free} free-flow offsets",
        100.0 * (without_sum - with_sum) / with_sum
    ))
}

fn weight_sweep() -> Outcome {
    let base = golden::single_intersection();
    let mut rows = Vec::new();
    for wt in TIME_WEIGHT_SWEEP {
        let s = base.with_time_weight(wt);
        let opt = search(&s).map_err(|e| format!("w_t {wt}: {e}"))?;
        let m = run_metrics(&opt.best.trajectory, &s);
        rows.push((wt, m.fuel, m.travel_time));
    }
    for w in rows.windows(2) {
        let ((w0, f0, t0), (w1, f1, t1)) = (w[0], w[1]);
        check(t1 <= t0 + 1e-9, || {
            format!("travel time rises from {t0:.4} (w_t {w0}) to {t1:.4} (w_t {w1})")
        })?;
        check(f1 >= f0 - 1e-9, || {
            format!("fuel falls from {f0:.4} (w_t {w0}) to {f1:.4} (w_t {w1})")
        })?;
    }
    let three = golden::three_intersection();
    let mut sels = Vec::new();
    for wt in TIME_WEIGHT_SWEEP {
        let opt = search(&three.with_time_weight(wt)).map_err(|e| format!("three, w_t {wt}: {e}"))?;
        sels.push(opt.best.selection.0);
    }
    let first = &sels[0];
    let earlier = sels[1..]
        .iter()
        .any(|s| s != first && s.iter().zip(first).all(|(a, b)| a <= b));
    check(earlier, || format!("no larger w_t picks an earlier window: {sels:?}"))?;
    Ok(format!(
        "golden travel time {:.2} -> {:.2} s, fuel {:.2} -> {:.2} g; three-intersection selections {sels:?}",
        rows[0].2, rows[4].2, rows[0].1, rows[4].1
    ))
}

fn fuel_wait() -> Outcome {
    let offsets: Vec<f64> = (0..15).map(|k| 5.0 * f64::from(k)).collect();
    let curve = fuel_wait_curve(&golden::single_intersection(), &offsets).map_err(|e| e.to_string())?;
    let wait: Vec<f64> = curve.iter().map(|p| p.wait).collect();
    let fuel: Vec<f64> = curve.iter().map(|p| p.fuel).collect();
    let fit = quadratic_fit(&wait, &fuel).ok_or("degenerate sweep")?;
    check(fit.r_squared >= 0.9, || format!("R² {:.4}", fit.r_squared))?;
    Ok(format!("15 offsets, R² {:.4}", fit.r_squared))
}

fn feasibility_suite() -> Outcome {
    let (mut solved, mut infeasible, mut compared) = (0, 0, 0);
    for seed in 0..1000u64 {
        let s = gen_random_scenario(seed);
        let result = search(&s);
        if let Ok(o) = &result {
            solved += 1;
            check(
                trajectory_feasible(&o.best.trajectory, &s, &o.best.selection, 1e-6),
                || format!("seed {seed}: returned trajectory violates bounds or crossing validity"),
            )?;
        } else {
            infeasible += 1;
        }
        let combos: usize = s.intersections.iter().map(|i| i.windows.len()).product();
        if combos <= 12 {
            compared += 1;
            match (&result, exhaustive_search(&s)) {
                (Ok(o), Some(e)) => {
                    check(o.best.selection == e.selection, || {
                        format!(
                            "seed {seed}: search picks {:?}, exhaustive {:?}",
                            o.best.selection.0, e.selection.0
                        )
                    })?;
                    let d = (o.best.objective.total - e.objective.total).abs();
                    check(d <= 1e-6, || format!("seed {seed}: objectives differ by {d:e}"))?;
                }
                (Err(_), None) => {}
                (r, e) => {
                    return Err(format!(
                        "seed {seed}: search found {}, exhaustive found {}",
                        r.is_ok(),
                        e.is_some()
                    ))
                }
            }
        }
    }
    Ok(format!(
        "{solved} solved, {infeasible} globally infeasible, {compared} checked against exhaustive enumeration"
    ))
}

fn micro_oracles() -> Outcome {
    let mut worst_qp: f64 = 0.0;
    for seed in 0..100 {
        let qp = random_qp(seed);
        let x = solve_qp(&qp).x;
        let y = dual_gradient_qp(&qp, 200_000, 1e-10);
        let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        check(err <= 1e-5, || {
            format!("qp seed {seed}: differs from the dual oracle by {err:e}")
        })?;
        worst_qp = worst_qp.max(err);
    }
    let (mut toys, mut toys_infeasible) = (0, 0);
    for seed in 0..200 {
        let s = gen_toy_scenario(seed);
        match (dp_solve(&s), brute_force_best(&s)) {
            (Ok(d), Ok(b)) => {
                check((d.objective.total - b.objective).abs() <= 1e-9, || {
                    format!("toy {seed}: dp {} vs enumeration {}", d.objective.total, b.objective)
                })?;
                toys += 1;
            }
            (Err(DpError::NoFeasiblePath), Err(_)) => toys_infeasible += 1,
            (d, b) => {
                return Err(format!("toy {seed}: dp {:?} vs enumeration {:?}", d.err(), b.err()));
            }
        }
    }
    let p = DriverParams::default();
    let mut worst_rel: f64 = 0.0;
    for m in [p.m_accel, p.m_decel] {
        for (v_i, v_f) in [(0.0, 17.88), (5.0, 13.0), (17.88, 0.0), (13.0, 8.66)] {
            let t = maneuver_times(v_i, v_f, (v_f < v_i).then_some(120.0)).duration;
            let dv = (v_f - v_i).abs();
            let got = driver_speed_change_quadrature(m, dv, t, 4000);
            let rel = (got - dv).abs() / dv;
            check(rel <= 0.005, || {
                format!("m {m}, {v_i} -> {v_f}: integral {got:.4} vs {dv:.4}")
            })?;
            worst_rel = worst_rel.max(rel);
        }
    }
    Ok(format!(
        "100 QPs (max error {worst_qp:.1e}); {toys} toys equal, {toys_infeasible} infeasible in both; driver profile within {:.3}%",
        100.0 * worst_rel
    ))
}

fn runtime_smoke() -> Outcome {
    let t = Instant::now();
    search(&golden::single_intersection()).map_err(|e| e.to_string())?;
    let golden_time = t.elapsed();
    check(golden_time <= Duration::from_secs(10), || {
        format!("golden took {golden_time:?}")
    })?;
    let t = Instant::now();
    search(&golden::turning()).map_err(|e| e.to_string())?;
    let turning_time = t.elapsed();
    check(turning_time <= Duration::from_secs(30), || {
        format!("turning took {turning_time:?}")
    })?;
    Ok(format!("golden {golden_time:.2?}, turning {turning_time:.2?}"))
}

fn first_order_consistency() -> Outcome {
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for (name, s) in golden::suite() {
        let reach: Vec<Vec<usize>> = s
            .intersections
            .iter()
            .map(|i| reachable_windows(i, &s.horizon, s.solver.crossing_margin))
            .collect();
        let opt = search(&s).map_err(|e| format!("{name}: {e}"))?;
        let mut selections = vec![opt.best.selection.clone()];
        if reach.len() == 1 {
            selections.extend(reach[0].iter().map(|&w| greenwave_core::WindowSelection(vec![w])));
        }
        for sel in selections {
            let Ok(r) = solve_fixed_window(&s, &sel) else { continue };
            for it in &r.report.iterations {
                let Some(truth) = it.true_at_center else { continue };
                let rel = (it.model_at_center - truth).abs() / truth.abs().max(1.0);
                check(rel <= 1e-6, || {
                    format!(
                        "{name} {:?} iteration {}: relative mismatch {rel:e}",
                        sel.0, it.iteration
                    )
                })?;
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    Ok(format!(
        "{checked} linearization points, max relative mismatch {worst:.1e}"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("turning speed limits", turning_limits),
        ("optimizer vs dynamic programming", scp_vs_dp),
        ("non-inferiority vs driver", driver_non_inferiority),
        ("turning constraint effect", turning_effect),
        ("time-weight sweep", weight_sweep),
        ("fuel-wait curve", fuel_wait),
        ("feasibility suite", feasibility_suite),
        ("solver micro-oracles", micro_oracles),
        ("runtime smoke", runtime_smoke),
        ("first-order consistency", first_order_consistency),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = f();
        let secs = t.elapsed().as_secs_f64();
        match out {
            Ok(msg) => println!("PASS {} {name}: {msg} [{secs:.1}s]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {} {name}: {msg} [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
