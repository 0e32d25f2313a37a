use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use foldbs_core::sim::{self, Mode, SimConfig};
use foldbs_core::synthesis::{observer_kernels_for_grid, solve_control_kernels, SolverSettings};

fn simulate(c: &mut Criterion) {
    let s = SolverSettings::default();
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    for mode in [Mode::Open, Mode::StateFeedback, Mode::OutputFeedback] {
        let cfg = SimConfig::table1(-0.3, -0.45, 401, 0.005, mode).unwrap();
        let gt = mode
            .needs_gains()
            .then(|| solve_control_kernels(&cfg.spec, cfg.c1, cfg.c2, &s).unwrap().gains(&cfg.grid).unwrap());
        let obs = mode
            .needs_observer()
            .then(|| observer_kernels_for_grid(&cfg.spec, &cfg.grid, cfg.cc1, cfg.cc2, &s).unwrap());
        g.bench_function(BenchmarkId::new("run", mode.name()), |b| {
            b.iter(|| sim::run(&cfg, gt.as_ref(), obs.as_ref()).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, simulate);
criterion_main!(benches);
