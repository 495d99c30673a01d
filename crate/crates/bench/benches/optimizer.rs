use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use wpifc_bench::{fixture, options};
use wpifc_core::surrogate::{build_maxmin_subproblem, build_sum_subproblem};
use wpifc_core::{
    grid_oracle, run, CsiMode, DesignModel, HarvestView, OracleResolution, ProblemKind,
    SolverOptions,
};

fn subproblem(c: &mut Criterion) {
    let f = fixture(5, 0);
    let model = DesignModel::new(
        &f.config,
        &f.channels,
        HarvestView::Perfect,
        CsiMode::PerfectCsi,
    )
    .unwrap();
    let solver = SolverOptions::default();
    let sum = build_sum_subproblem(&model, &f.design, f.design.tau).unwrap();
    let maxmin = build_maxmin_subproblem(&model, &f.design, f.design.tau).unwrap();
    c.bench_function("subproblem sum k5", |b| {
        b.iter(|| sum.solve(black_box(&solver)))
    });
    c.bench_function("subproblem maxmin k5", |b| {
        b.iter(|| maxmin.solve(black_box(&solver)))
    });
}

fn full_run(c: &mut Criterion) {
    let mut group = c.benchmark_group("run");
    group.sample_size(10);
    for k in [2, 5] {
        let f = fixture(k, 0);
        let opts = options(f.seed);
        for kind in [ProblemKind::SumThroughput, ProblemKind::MaxMin] {
            let name = format!("{kind:?} k{k}");
            group.bench_function(name, |b| {
                b.iter(|| {
                    run(
                        &f.config,
                        black_box(&f.channels),
                        kind,
                        &opts,
                        &SolverOptions::default(),
                    )
                })
            });
        }
    }
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let mut group = c.benchmark_group("oracle");
    group.sample_size(10);
    let f = fixture(2, 0);
    let coarse = OracleResolution {
        tau: 40,
        amplitude: 12,
        phase: 16,
        power: 12,
        refine_depth: 100,
    };
    group.bench_function("coarse k2", |b| {
        b.iter(|| {
            grid_oracle(
                &f.config,
                black_box(&f.channels),
                ProblemKind::SumThroughput,
                &coarse,
            )
        })
    });
    group.finish();
}

criterion_group!(benches, subproblem, full_run, oracle);
criterion_main!(benches);
