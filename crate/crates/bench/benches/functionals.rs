use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use magsob_core::functionals::{bbm_energy, jdelta_energy, jdelta_ray, local_energy};
use magsob_core::kernels::q_constant;
use magsob_core::{
    catalog, BoxGrid, BoxRule, Mollifier, QuadConfig, RadialGrid, ScalarField, SphereRule,
    VectorPotential,
};
use std::hint::black_box;

fn setup(dim: usize) -> (ScalarField, VectorPotential, QuadConfig) {
    let u = catalog("gaussian", dim, &[]).unwrap().into_field().unwrap();
    let a = if dim == 1 {
        catalog("zero_potential", 1, &[]).unwrap()
    } else {
        catalog("rotational_potential", dim, &[2.0]).unwrap()
    }
    .into_potential()
    .unwrap();
    let nodes = if dim == 1 { 256 } else { 32 };
    let cfg = QuadConfig::new(
        BoxGrid::new(dim, 8.0, nodes, BoxRule::GaussLegendre).unwrap(),
        RadialGrid::new(1e-6, 32.0, 96).unwrap(),
        SphereRule::build(dim, 16).unwrap(),
    )
    .unwrap();
    (u, a, cfg)
}

fn energies(c: &mut Criterion) {
    let mut group = c.benchmark_group("energies");
    group.sample_size(10);
    for dim in [1, 2] {
        let (u, a, cfg) = setup(dim);
        let rho = Mollifier::truncated_fractional(0.99, 16.0, dim).unwrap();
        group.bench_with_input(BenchmarkId::new("local", dim), &dim, |b, _| {
            b.iter(|| local_energy(&u, &a, 2.0, &cfg.grid).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("bbm", dim), &dim, |b, _| {
            b.iter(|| bbm_energy(&u, &a, &rho, 2.0, &cfg).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("jdelta", dim), &dim, |b, _| {
            b.iter(|| jdelta_energy(&u, &a, 1e-3, 2.0, &cfg).unwrap())
        });
    }
    group.finish();
}

fn rays(c: &mut Criterion) {
    let (u, a, cfg) = setup(2);
    let s = 0.6f64;
    c.bench_function("jdelta_ray", |b| {
        b.iter(|| {
            jdelta_ray(
                &u,
                &a,
                black_box(&[0.7, -0.2]),
                &[s.cos(), s.sin()],
                1e-4,
                2.0,
                &cfg.radial,
            )
            .unwrap()
        })
    });
}

fn sphere_constants(c: &mut Criterion) {
    let rule = SphereRule::build(3, 256).unwrap();
    c.bench_function("q_constant_n3_p1.5", |b| {
        b.iter(|| q_constant(3, black_box(1.5), &rule).unwrap())
    });
}

criterion_group!(benches, energies, rays, sphere_constants);
criterion_main!(benches);
