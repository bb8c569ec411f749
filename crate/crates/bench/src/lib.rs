//! Criterion benchmarks for the greenwave solvers; see `benches/`.
