use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use greenwave_core::qp::solve_qp;
use greenwave_core::scp::init_subproblem;
use greenwave_core::testkit::{golden, random_qp};
use greenwave_core::{dp_solve, search, simulate_driver, solve_fixed_window};

fn qp(c: &mut Criterion) {
    let s = golden::single_intersection();
    let sel = search(&s).expect("golden scenario solves").best.selection;
    let sub = init_subproblem(&s, &sel);
    c.bench_function("qp/golden_subproblem", |b| b.iter(|| solve_qp(black_box(&sub.qp))));
    let small: Vec<_> = (0..32).map(random_qp).collect();
    c.bench_function("qp/random_small_x32", |b| {
        b.iter(|| small.iter().map(|q| solve_qp(black_box(q)).x.len()).sum::<usize>())
    });
}

fn scp(c: &mut Criterion) {
    let s = golden::single_intersection();
    let sel = search(&s).expect("golden scenario solves").best.selection;
    c.bench_function("scp/golden_fixed_window", |b| {
        b.iter(|| solve_fixed_window(black_box(&s), &sel))
    });
    let turning = golden::turning();
    c.bench_function("search/turning", |b| b.iter(|| search(black_box(&turning))));
    let three = golden::three_intersection();
    c.bench_function("search/three_intersection", |b| b.iter(|| search(black_box(&three))));
    c.bench_function("driver/golden", |b| b.iter(|| simulate_driver(black_box(&s))));
}

fn dp(c: &mut Criterion) {
    let s = golden::single_intersection();
    let mut g = c.benchmark_group("dp");
    g.sample_size(10);
    g.bench_function("golden", |b| b.iter(|| dp_solve(black_box(&s))));
    g.finish();
}

criterion_group!(benches, qp, scp, dp);
criterion_main!(benches);
