//! Seeded random scenarios.
//!
//! Signals are fixed-cycle: cycle 30-90 s, green fraction 0.3-0.6, random
//! phase. Stop lines sit 150-600 m apart. The initial speed is a point of the
//! default DP speed grid so every generated instance can also be solved by
//! [`crate::dp::dp_solve`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scenario::{GreenWindow, Intersection, JerkMode, Scenario, TurnSpec};
use crate::testkit::golden;

pub const CYCLE_RANGE: (f64, f64) = (30.0, 90.0);
pub const GREEN_FRACTION_RANGE: (f64, f64) = (0.3, 0.6);
pub const GAP_RANGE: (f64, f64) = (150.0, 600.0);

/// Time weights drawn by the generator.
const TIME_WEIGHTS: [f64; 4] = [5.0, 50.0, 500.0, 2000.0];

/// Fixed-cycle windows overlapping `[0, horizon]`.
pub fn cycle_windows(cycle: f64, green: f64, phase: f64, horizon: f64) -> Vec<GreenWindow> {
    let mut out = Vec::new();
    let mut start = phase - cycle;
    while start < horizon {
        let end = start + green;
        if end > 0.0 {
            out.push(GreenWindow::new(start, end));
        }
        start += cycle;
    }
    out
}

fn build(rng: &mut ChaCha8Rng, n_int: usize, varied: bool, seed: u64) -> Scenario {
    let mut s = golden::single_intersection();
    s.name = format!("random-{seed}");
    let v_max = s.horizon.speed_limit;
    // 72 intervals on the default speed grid
    s.horizon.initial_speed = v_max * f64::from(rng.random_range(36u32..=72)) / 72.0;
    if varied {
        s.weights.time = TIME_WEIGHTS[rng.random_range(0..TIME_WEIGHTS.len())];
    }

    let mut positions = Vec::with_capacity(n_int);
    let mut x = 0.0;
    for _ in 0..n_int {
        x += rng.random_range(GAP_RANGE.0..=GAP_RANGE.1).round();
        positions.push(x);
    }
    let x_last = *positions.last().expect("at least one intersection");
    let duration = (((x_last + 300.0) / v_max + 30.0) / 10.0).ceil() * 10.0;
    s.horizon.duration = duration;

    s.intersections = positions
        .into_iter()
        .map(|position| {
            let cycle = rng.random_range(CYCLE_RANGE.0..=CYCLE_RANGE.1).round();
            let green = (cycle * rng.random_range(GREEN_FRACTION_RANGE.0..=GREEN_FRACTION_RANGE.1)).round();
            let phase = rng.random_range(0.0..cycle).round();
            let turn = (varied && rng.random_bool(0.2)).then(|| TurnSpec {
                radius: 25.0,
                friction: 0.7,
                lateral_accel: 3.0,
                accel_min: -1.0,
                accel_max: 1.0,
            });
            Intersection {
                position,
                windows: cycle_windows(cycle, green, phase, duration),
                turn,
            }
        })
        .collect();
    s
}

/// One to three intersections, occasionally with a turning movement, with
/// a random time weight.
pub fn gen_random_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=3);
    build(&mut rng, n, true, seed)
}

/// A single straight-through intersection with the reference weights of the
/// single-intersection golden scenario.
pub fn gen_single_intersection(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5157_1e00);
    build(&mut rng, 1, false, seed)
}

/// A few-step instance on a unit grid (speeds 0-2 m/s, actions -1/0/1 m/s²,
/// 0.5 m distance cells) small enough for exhaustive enumeration.
pub fn gen_toy_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x70f0);
    let mut s = golden::single_intersection();
    s.name = format!("toy-{seed}");
    let h = &mut s.horizon;
    h.duration = f64::from(rng.random_range(3u32..=5));
    h.initial_speed = f64::from(rng.random_range(0u32..=2));
    h.speed_limit = 2.0;
    h.accel_min = -1.0;
    h.accel_max = 1.0;
    h.jerk_min = -1.0;
    h.jerk_max = 1.0;
    s.weights.time = [0.0, 1.0, 5.0][rng.random_range(0..3)];
    s.weights.comfort = [0.0, 0.5, 1.0][rng.random_range(0..3)];
    s.dp.distance_step = 0.5;
    s.dp.speed_step = 1.0;
    s.dp.accel_step = 1.0;
    s.dp.distance_margin = 0.0;
    if rng.random_bool(0.5) {
        s.dp.jerk_mode = JerkMode::Augment;
        if rng.random_bool(0.5) {
            s.fuel_curve.transient_coefficient = 0.002;
        }
    }
    let position = [0.8, 1.3, 2.3, 3.3][rng.random_range(0..4)];
    let opens: Vec<f64> = [-1.0, 1.2, 2.4, 3.2]
        .into_iter()
        .filter(|&o| o < s.horizon.duration)
        .collect();
    let open = opens[rng.random_range(0..opens.len())];
    let close = if rng.random_bool(0.7) { 20.0 } else { open + 1.6 };
    s.intersections = vec![Intersection {
        position,
        windows: vec![GreenWindow::new(open, close)],
        turn: None,
    }];
    s
}

/// Whether cruising at the initial speed meets a red light somewhere.
pub fn free_flow_blocked(s: &Scenario) -> bool {
    let v0 = s.horizon.initial_speed;
    s.intersections.iter().any(|int| {
        let t = int.position / v0;
        t < s.horizon.duration && !int.windows.iter().any(|w| w.contains_strict(t))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::validate_scenario;

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(gen_random_scenario(7), gen_random_scenario(7));
        assert_ne!(gen_random_scenario(7), gen_random_scenario(8));
        assert_eq!(gen_single_intersection(3), gen_single_intersection(3));
    }

    #[test]
    fn thousand_seeds_validate() {
        for seed in 0..1000 {
            let s = gen_random_scenario(seed);
            let v = validate_scenario(&s);
            assert!(v.is_empty(), "seed {seed}: {v:?}");
            assert!((1..=3).contains(&s.intersections.len()));
            let mut prev = 0.0;
            for int in &s.intersections {
                let gap = int.position - prev;
                assert!((GAP_RANGE.0..=GAP_RANGE.1).contains(&gap), "seed {seed}");
                prev = int.position;
            }
        }
    }

    #[test]
    fn some_seed_blocks_free_flow() {
        assert!((0..50).any(|seed| free_flow_blocked(&gen_random_scenario(seed))));
    }

    #[test]
    fn toys_validate() {
        for seed in 0..200 {
            let s = gen_toy_scenario(seed);
            let v = validate_scenario(&s);
            assert!(v.is_empty(), "seed {seed}: {v:?}");
        }
    }

    #[test]
    fn windows_follow_the_cycle() {
        let w = cycle_windows(60.0, 30.0, 20.0, 90.0);
        assert_eq!(w, vec![GreenWindow::new(20.0, 50.0), GreenWindow::new(80.0, 110.0)]);
    }
}
