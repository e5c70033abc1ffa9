use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use mslayer::admm::{self, pcg, AdmmProblem, SystemOperator};
use mslayer::baselines::{ldg, mdg};
use mslayer::rounding::round;
use mslayer::{build_ilp, AdmmParams, LatencyTable, StopRule};
use mslayer_bench::{default_scale, reduced_scale, with_latencies};

fn latency_table(c: &mut Criterion) {
    let s = default_scale(1);
    c.bench_function("latency_table/default", |b| b.iter(|| LatencyTable::build(black_box(&s))));
}

fn assembly(c: &mut Criterion) {
    let (s, lt) = with_latencies(default_scale(1));
    c.bench_function("build_ilp/default", |b| b.iter(|| build_ilp(black_box(&s), black_box(&lt))));
}

fn linear_solve(c: &mut Criterion) {
    let (s, lt) = with_latencies(default_scale(1));
    let inst = build_ilp(&s, &lt);
    let problem = AdmmProblem::new(&inst, true);
    let rhs: Vec<f64> = (0..inst.q()).map(|i| ((i * 37) % 11) as f64 / 11.0 - 0.5).collect();
    let x0 = vec![0.0; inst.q()];
    c.bench_function("pcg/default", |b| {
        b.iter(|| {
            let mut op = SystemOperator::new(&problem, 1.0, 0.5, 0.5);
            pcg(&mut op, black_box(&rhs), &x0, 1e-6, 2000).expect("system is positive definite")
        })
    });
}

fn admm_run(c: &mut Criterion) {
    let (s, lt) = with_latencies(reduced_scale(1));
    let inst = build_ilp(&s, &lt);
    let params = AdmmParams { max_iters: Some(200), ..AdmmParams::default() };
    let mut group = c.benchmark_group("admm");
    group.sample_size(10);
    group.bench_function("reduced/200_iterations", |b| b.iter(|| admm::run(black_box(&inst), &params, None)));
    group.finish();
}

fn heuristics(c: &mut Criterion) {
    let (s, lt) = with_latencies(default_scale(1));
    let inst = build_ilp(&s, &lt);
    let relaxed = admm::run(&inst, &AdmmParams { max_iters: Some(300), ..AdmmParams::default() }, None)
        .expect("short run does not diverge");
    c.bench_function("round/default", |b| {
        b.iter_batched(|| relaxed.v.clone(), |v| round(&v, &s, &lt, StopRule::FirstFailure), BatchSize::SmallInput)
    });
    c.bench_function("ldg/default", |b| b.iter(|| ldg(black_box(&s), &lt)));
    c.bench_function("mdg/default", |b| b.iter(|| mdg(black_box(&s), &lt)));
}

criterion_group!(benches, latency_table, assembly, linear_solve, admm_run, heuristics);
criterion_main!(benches);
