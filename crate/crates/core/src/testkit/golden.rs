//! Scenarios checked into `scenarios/`.

use crate::scenario::{parse_scenario, Scenario};

pub const SINGLE_INTERSECTION: &str = include_str!("../../../../scenarios/single_intersection.json");
pub const TURNING: &str = include_str!("../../../../scenarios/turning.json");
pub const THREE_INTERSECTION: &str = include_str!("../../../../scenarios/three_intersection.json");
pub const TRANSIENT_EXAMPLE: &str = include_str!("../../../../scenarios/transient_example.json");

fn load(text: &str) -> Scenario {
    parse_scenario(text).expect("bundled scenario is valid")
}

/// One signalized intersection, 40 mph limit, 90 s horizon.
pub fn single_intersection() -> Scenario {
    load(SINGLE_INTERSECTION)
}

/// Turning movement with a 25 m radius and a 13 m/s limit.
pub fn turning() -> Scenario {
    load(TURNING)
}

/// Three intersections for window-choice studies.
pub fn three_intersection() -> Scenario {
    load(THREE_INTERSECTION)
}

/// Single intersection with a nonzero transient fuel coefficient.
pub fn transient_example() -> Scenario {
    load(TRANSIENT_EXAMPLE)
}

/// All bundled scenarios with their names.
pub fn suite() -> Vec<(&'static str, Scenario)> {
    vec![
        ("single_intersection", single_intersection()),
        ("turning", turning()),
        ("three_intersection", three_intersection()),
    ]
}
