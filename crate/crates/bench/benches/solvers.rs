use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use mecopt_bench::scenario;
use mecopt_core::association::{build_qcqp, gaussian_randomize, solve_association_sdr};
use mecopt_core::harness::desk_solve_options;
use mecopt_core::power::optimal_powers;
use mecopt_core::resolution::optimal_resolutions;
use mecopt_core::{solve_joint, Association, SdpSettings};

fn power(c: &mut Criterion) {
    let sc = scenario(1000, 1, 1);
    c.bench_function("optimal_powers/1000", |b| {
        b.iter(|| optimal_powers(black_box(&sc.config), black_box(&sc.users)).unwrap())
    });
}

fn resolution(c: &mut Criterion) {
    let sc = scenario(100, 10, 2);
    let assoc = Association::round_robin(sc.users.len(), sc.servers.len());
    c.bench_function("optimal_resolutions/100", |b| {
        b.iter(|| {
            optimal_resolutions(&sc.config, &sc.users, &sc.servers, black_box(&assoc)).unwrap()
        })
    });
}

fn association(c: &mut Criterion) {
    let mut group = c.benchmark_group("association");
    group.sample_size(10);
    for (k, n) in [(6, 3), (12, 4)] {
        let sc = scenario(k, n, 3);
        let res = vec![sc.config.s_min_px; sc.users.len()];
        let inst = build_qcqp(&sc.config, &sc.users, &sc.servers, &res).unwrap();
        let settings = SdpSettings {
            tol: 1e-4,
            ..SdpSettings::default()
        };
        group.bench_function(format!("sdr/{k}x{n}"), |b| {
            b.iter(|| solve_association_sdr(black_box(&inst), &settings, None).unwrap())
        });
        let sdr = solve_association_sdr(&inst, &settings, None).unwrap();
        group.bench_function(format!("randomize_1000/{k}x{n}"), |b| {
            b.iter(|| gaussian_randomize(&inst, black_box(sdr.b()), 1000, 7).unwrap())
        });
    }
    group.finish();
}

fn joint(c: &mut Criterion) {
    let mut group = c.benchmark_group("joint");
    group.sample_size(10);
    let sc = scenario(10, 3, 4);
    let opts = desk_solve_options(4);
    group.bench_function("solve_joint/10x3", |b| {
        b.iter(|| solve_joint(&sc.config, &sc.users, &sc.servers, black_box(&opts)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, power, resolution, association, joint);
criterion_main!(benches);
