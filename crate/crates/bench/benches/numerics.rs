use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use hbl_core::control::{rollout_value, ControlPolicy};
use hbl_core::pde::{solve_heat, solve_hjb, HjbScheme, SpatialGrid};
use hbl_core::sde::{simulate_forward, DiffusionSpec, PointMass, SimulationPlan};
use hbl_core::smoothing::{local_entropy, HeatKernelParams};
use hbl_core::{EnergyLandscape, GibbsDensity};

fn pde(c: &mut Criterion) {
    let l = EnergyLandscape::double_well();
    let g = GibbsDensity::new(l.clone(), 1.0).unwrap();
    let grid = SpatialGrid::over(g.domain(), 801).unwrap();
    let rho0 = grid.sample(|x| g.density(x));
    let u0 = grid.sample(|x| l.energy(x));
    c.bench_function("heat 801x400", |b| b.iter(|| solve_heat(black_box(&rho0), &grid, 1.0, 1.0, 400).unwrap()));
    c.bench_function("hjb cole-hopf 801x400", |b| {
        b.iter(|| solve_hjb(black_box(&u0), &grid, 1.0, 1.0, 400, HjbScheme::ColeHopf).unwrap())
    });
    c.bench_function("hjb direct 801x400", |b| {
        b.iter(|| solve_hjb(black_box(&u0), &grid, 1.0, 1.0, 400, HjbScheme::Direct { substeps: None }).unwrap())
    });
}

fn smoothing(c: &mut Criterion) {
    let l = EnergyLandscape::rugged_default();
    let p = HeatKernelParams::new(1.0, 1.0, 1).unwrap();
    c.bench_function("local entropy rugged 1-D", |b| b.iter(|| local_entropy(&p, &l, black_box(&[0.3])).unwrap()));
    let l2 = EnergyLandscape::double_well_2d();
    let p2 = HeatKernelParams::new(1.0, 1.0, 2).unwrap();
    c.bench_function("local entropy double-well 2-D", |b| b.iter(|| local_entropy(&p2, &l2, black_box(&[0.3, -0.2])).unwrap()));
}

fn sde(c: &mut Criterion) {
    let mut group = c.benchmark_group("sde");
    group.sample_size(10);
    let spec = DiffusionSpec::langevin(&EnergyLandscape::double_well(), 2.0, 1.0).unwrap();
    group.bench_function("langevin 1e4 paths x 100 steps", |b| {
        b.iter(|| simulate_forward(&spec, &PointMass(vec![0.0]), &SimulationPlan::new(100, 10_000, 1).endpoints()).unwrap())
    });
    let gibbs = GibbsDensity::new(EnergyLandscape::quadratic(1), 1.0).unwrap();
    let policy = ControlPolicy::zero(1, 1.0);
    group.bench_function("rollout 1e4 x 200", |b| {
        b.iter(|| rollout_value(&policy, black_box(&[0.5]), 1.0, 200, 10_000, 3, &gibbs).unwrap())
    });
    group.finish();
}

criterion_group!(benches, pde, smoothing, sde);
criterion_main!(benches);
