use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use noether_bench::{aircraft_start, aircraft_system};
use noether_core::aircraft::{self, builtin_groups, AircraftConfig};
use noether_core::expr::{CompiledExpr, Env, Expr, SlotLayout};
use noether_core::pareto::{filter_dominated, OutcomePoint};
use noether_core::{check_invariance_p, GridSearch};
use std::hint::black_box;

const FIELD: &str = "psi1*x3 + psi2*x4 + psi3*(c1*(u1/x5)*cos(u2)) + psi4*(c1*(u1/x5)*sin(u2) - c2) - psi5*u1";

fn expressions(c: &mut Criterion) {
    let e = Expr::parse(FIELD).unwrap();
    let names = [
        "x3", "x4", "x5", "u1", "u2", "psi1", "psi2", "psi3", "psi4", "psi5", "c1", "c2",
    ];
    let values = [1.0, 0.5, 5.0, 1.0, 0.3, 0.3, -0.2, 1.0, 0.5, 0.1, 1.0, 1.0];
    let env: Env = names.iter().copied().zip(values).collect();
    let compiled = CompiledExpr::new(&e, &SlotLayout::new(names)).unwrap();
    c.bench_function("parse", |b| b.iter(|| Expr::parse(black_box(FIELD)).unwrap()));
    c.bench_function("eval tree", |b| b.iter(|| e.eval(black_box(&env)).unwrap()));
    c.bench_function("eval compiled", |b| {
        b.iter(|| compiled.eval(black_box(&values)).unwrap())
    });
    c.bench_function("diff and simplify", |b| b.iter(|| black_box(&e).diff("u2").simplify()));
}

fn invariance(c: &mut Criterion) {
    let cfg = AircraftConfig::default();
    let p = aircraft::build_problem(&cfg).unwrap();
    let scaling = &builtin_groups()[2];
    let sc = aircraft::sample_config(&cfg).with_samples(1000);
    c.bench_function("scaling invariance, 1000 samples", |b| {
        b.iter(|| check_invariance_p(&p, scaling, &sc).unwrap())
    });
}

fn extremals(c: &mut Criterion) {
    let sys = aircraft_system();
    let (x0, psi0, m) = aircraft_start();
    c.bench_function("aircraft extremal, 1000 steps", |b| {
        b.iter(|| sys.integrate(&x0, &psi0, &m, 1000).unwrap())
    });
    let grid = GridSearch::default();
    c.bench_function("grid audit, 64x64", |b| {
        b.iter(|| sys.audit(0.0, &x0, &psi0, &m, &grid).unwrap())
    });
}

fn dominance(c: &mut Criterion) {
    let points: Vec<OutcomePoint> = (0..500)
        .map(|k| {
            let a = f64::from(k) / 500.0;
            OutcomePoint::with_costs(vec![], vec![a, (1.0 - a).powi(2), (3.0 * a).sin()])
        })
        .collect();
    c.bench_function("dominance filter, 500 points", |b| {
        b.iter_batched(
            || points.clone(),
            |p| filter_dominated(&p).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, expressions, invariance, extremals, dominance);
criterion_main!(benches);
