use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use num_complex::Complex64;

use rsl_core::criteria::{self, CriteriaConfig};
use rsl_core::oracle::{self, OracleConfig};
use rsl_core::problem::find;
use rsl_core::quad::{self, Tolerance};
use rsl_core::{differential_root, FnPair, Grid, RootOptions};

fn root(c: &mut Criterion) {
    let x = FnPair {
        f: |t: f64| t,
        df: |_: f64| 1.0,
    };
    let grid = Arc::new(Grid::log_stretched(1.0, 100.0, 4000).unwrap());
    c.bench_function("differential_root x=t [1,100]", |b| {
        b.iter(|| {
            differential_root(black_box(&x), Arc::clone(&grid), &RootOptions::default()).unwrap()
        })
    });
}

fn quadrature(c: &mut Criterion) {
    c.bench_function("gk21 adaptive sin(exp(t))^2 on [1,8]", |b| {
        b.iter(|| {
            quad::integrate(
                |t: f64| Ok(t.exp().sin().powi(2)),
                black_box(1.0),
                8.0,
                Tolerance::default(),
            )
            .unwrap()
        })
    });
}

fn pipeline(c: &mut Criterion) {
    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    let p = find("ex2.2")
        .unwrap()
        .with_param("lambda", Complex64::new(1.0, 0.0));
    let cfg = CriteriaConfig::default();
    g.bench_function("criteria ex2.2", |b| {
        b.iter(|| criteria::verdict(&p, 60.0, &cfg).unwrap())
    });
    let p = find("ex2.1").unwrap();
    let ocfg = OracleConfig::default();
    g.bench_function("oracle ex2.1 [1,12]", |b| {
        b.iter(|| oracle::fundamental_growth(&p, 12.0, &ocfg).unwrap())
    });
    g.finish();
}

criterion_group!(benches, root, quadrature, pipeline);
criterion_main!(benches);
