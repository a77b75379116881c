use criterion::{black_box, criterion_group, criterion_main, Criterion};
use ristep::{
    adaptive_run, check_bv, make_model_1d, residua, solve_stationary, EnergyModel, SchemeOptions,
    SolverOptions,
};
use ristep_bench::{fem_model, lumped_metric, noise};

fn bench_metric_kernels(c: &mut Criterion) {
    let n = 10_000;
    let metric = lumped_metric(n);
    let d = noise(n, 1);
    let eta = noise(n, 2);
    c.bench_function("prox_r_ball_10k", |b| {
        b.iter(|| black_box(metric.prox_r_ball(black_box(&d), 0.3)))
    });
    c.bench_function("dist_subdiff_10k", |b| {
        b.iter(|| black_box(metric.dist_subdiff(black_box(&eta))))
    });
}

fn bench_stationarity(c: &mut Criterion) {
    let one_d = make_model_1d();
    let opts = SolverOptions::default();
    c.bench_function("stationarity_1d_jump", |b| {
        b.iter(|| solve_stationary(&one_d, 2.5, black_box(&[-1.0]), 0.25, &opts).unwrap())
    });

    let fem = fem_model(11);
    let fem_opts = SolverOptions::fem();
    let z: Vec<f64> = noise(fem.dim(), 3).iter().map(|x| -0.9 + 0.2 * x).collect();
    c.bench_function("stationarity_fem_n11", |b| {
        b.iter(|| solve_stationary(&fem, 0.5, black_box(&z), 0.01, &fem_opts).unwrap())
    });
}

fn bench_residua(c: &mut Criterion) {
    let fem = fem_model(21);
    let z_prev = fem.initial_state();
    let z_new: Vec<f64> = noise(fem.dim(), 4).iter().map(|x| 0.002 * x).collect();
    c.bench_function("residua_fem_n21_nq8", |b| {
        b.iter(|| residua(&fem, (0.1, &z_prev), (0.105, black_box(&z_new)), 0.01, 8).unwrap())
    });
}

fn bench_driver(c: &mut Criterion) {
    let model = make_model_1d();
    let opts = SchemeOptions::default();
    c.bench_function("adaptive_run_1d_tol_1e-2", |b| {
        b.iter(|| adaptive_run(&model, 1e-2, 0.1, &opts).unwrap())
    });
    let traj = adaptive_run(&model, 1e-2, 0.1, &opts).unwrap();
    c.bench_function("check_bv_1d_nq64", |b| {
        b.iter(|| check_bv(black_box(&traj), &model, 64).unwrap())
    });
}

criterion_group!(
    benches,
    bench_metric_kernels,
    bench_stationarity,
    bench_residua,
    bench_driver
);
criterion_main!(benches);
