use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ggflow_bench::random_polytopes;
use ggflow_core::semiconcave::min_norm_point;
use ggflow_core::{
    builtin_solution, critical_constant, integrate, min_norm_selection, solve_lax_oleinik,
    FlowParams, LaxOleinikConfig, Potential, TorusPoint,
};

fn wolfe(c: &mut Criterion) {
    for k in [4, 16, 64] {
        let polys = random_polytopes(256, k, 7);
        c.bench_function(&format!("min_norm_point/{k}_vertices"), |b| {
            b.iter(|| {
                for p in &polys {
                    black_box(min_norm_point(p).unwrap());
                }
            })
        });
    }
}

fn selection(c: &mut Criterion) {
    let u1 = builtin_solution("pendulum", 1024).unwrap();
    let u2 = builtin_solution("pendulum2d", 128).unwrap();
    let x1 = TorusPoint::new1(0.3);
    let x2 = TorusPoint::new2(0.3, 0.05);
    c.bench_function("selection/1d", |b| b.iter(|| min_norm_selection(&u1, black_box(&x1)).unwrap()));
    c.bench_function("selection/2d_kink", |b| b.iter(|| min_norm_selection(&u2, black_box(&x2)).unwrap()));
}

fn lax_oleinik(c: &mut Criterion) {
    let mut g = c.benchmark_group("lax_oleinik");
    g.sample_size(10);
    for (name, n) in [("pendulum", 256), ("pendulum2d", 48)] {
        let v = Potential::registered(name).unwrap();
        let alpha0 = critical_constant(&v, 1024).unwrap();
        let cfg = LaxOleinikConfig::new(n);
        g.bench_function(format!("{name}/n{n}"), |b| {
            b.iter(|| solve_lax_oleinik(&v, alpha0, &cfg, None).unwrap())
        });
    }
    g.finish();
}

fn flow(c: &mut Criterion) {
    let mut g = c.benchmark_group("integrate");
    g.sample_size(20);
    let u = builtin_solution("degenerate", 1024).unwrap();
    let params = FlowParams::new(&u, 10.0, 1e-3);
    g.bench_function("degenerate/T10", |b| {
        b.iter_batched(
            || TorusPoint::new1(0.2),
            |x| integrate(&u, &x, &params, None).unwrap(),
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

criterion_group!(benches, wolfe, selection, lax_oleinik, flow);
criterion_main!(benches);
