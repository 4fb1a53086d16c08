use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use pilotwave_core::detection::{MarginalCdf, DEFAULT_QUAD_TOL};
use pilotwave_core::guidance::{GuidanceField, DEFAULT_NODE_EPS};
use pilotwave_core::quadrature::{Rect, TensorGauss};
use pilotwave_core::*;

fn field(c: &mut Criterion) {
    let params = PhysicalParams::default();
    let p = PhasePoint::new(3.2, -4.1, 6.0);
    // The free function rebuilds the node-guard peak table on every call.
    c.bench_function("velocity_field_with_setup", |b| {
        b.iter(|| velocity_field(black_box(&p), &params))
    });
    let guide = GuidanceField::new(params, DEFAULT_NODE_EPS, 0.0, params.t0);
    c.bench_function("guidance_velocity", |b| {
        b.iter(|| guide.velocity(black_box(p.y1), black_box(p.y2), black_box(p.t)))
    });
    let state = TwoSlitState::new(params).unwrap();
    c.bench_function("state_slice_density", |b| {
        b.iter(|| state.at(black_box(6.0)).density(black_box(3.2), black_box(-4.1)))
    });
}

fn trajectories(c: &mut Criterion) {
    let params = PhysicalParams::default();
    let settings = IntegratorSettings::default();
    let start = PhasePoint::new(4.3, -5.6, 0.0);
    c.bench_function("integrate_pair_with_setup", |b| {
        b.iter(|| integrate_pair(black_box(start), params.t0, &settings, &params).unwrap())
    });
    let integrator = PairIntegrator::new(params, settings, 0.0, params.t0).unwrap();
    c.bench_function("endpoint_to_t0", |b| {
        b.iter(|| integrator.endpoint(black_box(start), params.t0).unwrap())
    });
}

fn ensembles(c: &mut Criterion) {
    let params = PhysicalParams::default();
    let cfg = EnsembleConfig {
        n_pairs: 10_000,
        master_seed: 1,
        constraint: Constraint::Equilibrium,
    };
    let mut group = c.benchmark_group("ensemble");
    group.sample_size(20);
    group.bench_function("sample_equilibrium_1e4", |b| {
        b.iter(|| sample_equilibrium(black_box(&cfg), &params).unwrap())
    });
    let small = EnsembleConfig { n_pairs: 200, ..cfg };
    let points = sample_equilibrium(&small, &params).unwrap();
    group.bench_function("evolve_200_pairs", |b| {
        b.iter_batched(
            || points.clone(),
            |pts| evolve_ensemble(&pts, params.t0, &IntegratorSettings::default(), &params, 1).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

fn quadrature(c: &mut Criterion) {
    let params = PhysicalParams::default();
    let state = TwoSlitState::new(params).unwrap();
    let mut group = c.benchmark_group("quadrature");
    group.sample_size(10);
    let rule = TensorGauss::new(10);
    let slice = state.at(params.t0);
    let half = params.support_half_width(params.t0, 12.0);
    group.bench_function("norm_96x96_gauss10", |b| {
        b.iter(|| rule.integrate_composite(|a, b| slice.density(a, b), &Rect::square(half), 96, 96))
    });
    let (w1, w2) = (
        DetectorWindow::between(0.5, 3.0).unwrap(),
        DetectorWindow::between(3.0, 8.0).unwrap(),
    );
    group.bench_function("window_probability", |b| {
        b.iter(|| sqm_window_probability(&w1, &w2, params.t0, &state, DEFAULT_QUAD_TOL).unwrap())
    });
    group.bench_function("marginal_cdf_build", |b| {
        b.iter(|| MarginalCdf::new(&state, params.t0).unwrap())
    });
    group.finish();
}

criterion_group!(benches, field, trajectories, ensembles, quadrature);
criterion_main!(benches);
