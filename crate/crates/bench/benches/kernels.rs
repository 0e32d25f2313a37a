use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use foldbs_core::synthesis::{solve_control_kernels, solve_observer_kernels, SolverSettings};
use foldbs_core::PlantSpec;

fn kernels(c: &mut Criterion) {
    let spec = PlantSpec::table1(-0.3, -0.45).unwrap();
    let mut g = c.benchmark_group("kernels");
    g.sample_size(10);
    for tri_n in [51, 101, 201] {
        let s = SolverSettings {
            tri_n,
            ..SolverSettings::default()
        };
        g.bench_with_input(BenchmarkId::new("control", tri_n), &s, |b, s| {
            b.iter(|| solve_control_kernels(black_box(&spec), 5.0, 5.0, s).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("observer", tri_n), &s, |b, s| {
            b.iter(|| solve_observer_kernels(black_box(&spec), 1.0, 1.0, s).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
