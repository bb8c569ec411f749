//! Verification scaffolding: golden scenarios, a seeded scenario generator
//! and brute-force oracles.

pub mod generator;
pub mod golden;
pub mod oracles;

pub use crate::search::exhaustive_search;
pub use generator::{gen_random_scenario, gen_single_intersection, gen_toy_scenario};
pub use oracles::{brute_force_best, driver_speed_change_quadrature, dual_gradient_qp, random_qp};
