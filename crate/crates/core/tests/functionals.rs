use magsob_core::functionals::{bbm_energy, jdelta_energy, local_energy, truncate_field};
use magsob_core::kernels::{q_constant, KernelSpec};
use magsob_core::{
    catalog, psi, BoxGrid, BoxRule, Complex64, McSampler, Mollifier, QuadConfig, RadialGrid,
    ScalarField, SphereRule, VectorPotential,
};
use proptest::prelude::*;

fn field(name: &str, dim: usize, params: &[f64]) -> ScalarField {
    catalog(name, dim, params).unwrap().into_field().unwrap()
}

fn potential(name: &str, dim: usize, params: &[f64]) -> VectorPotential {
    catalog(name, dim, params)
        .unwrap()
        .into_potential()
        .unwrap()
}

fn cfg(dim: usize, nodes: usize, order: usize) -> QuadConfig {
    QuadConfig::new(
        BoxGrid::new(dim, 7.0, nodes, BoxRule::GaussLegendre).unwrap(),
        RadialGrid::new(1e-6, 32.0, 96).unwrap(),
        SphereRule::build(dim, order).unwrap(),
    )
    .unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn bbm_integrand_is_symmetric() {
    let rho = Mollifier::truncated_fractional(0.9, 4.0, 2).unwrap();
    let cases = [
        (
            field("gaussian", 2, &[]),
            potential("rotational_potential", 2, &[2.0]),
        ),
        (
            field("modulated_gaussian", 2, &[1.0, 1.2]),
            potential("gradient_potential", 2, &[0.5]),
        ),
        (
            field("bump", 2, &[1.5]),
            potential("constant_potential", 2, &[0.4, -0.7]),
        ),
    ];
    let s = McSampler::new(2024, 1000, 3).unwrap();
    let mut g = [0.0; 4];
    for (u, a) in &cases {
        for k in 0..1000 {
            s.uniforms(k, &mut g);
            let x = [4.0 * g[0] - 2.0, 4.0 * g[1] - 2.0];
            let y = [4.0 * g[2] - 2.0, 4.0 * g[3] - 2.0];
            let r = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
            let weight = rho.eval(r) / (r * r);
            let fxy = (psi(u, a, &x, &y).unwrap() - u.eval(&x)).norm_sqr() * weight;
            let fyx = (psi(u, a, &y, &x).unwrap() - u.eval(&y)).norm_sqr() * weight;
            assert!(
                (fxy - fyx).abs() <= 1e-13 * (1.0 + fxy.abs()),
                "{} at {x:?} {y:?}",
                u.label()
            );
        }
    }
}

#[test]
fn global_phase_leaves_energies_unchanged() {
    let c = cfg(2, 28, 16);
    let u = field("modulated_gaussian", 2, &[0.7, 1.1]);
    let a = potential("rotational_potential", 2, &[1.5]);
    let rho = Mollifier::truncated_fractional(0.95, 8.0, 2).unwrap();
    let e = local_energy(&u, &a, 2.0, &c.grid).unwrap().value;
    let b = bbm_energy(&u, &a, &rho, 2.0, &c).unwrap().value;
    let j = jdelta_energy(&u, &a, 1e-2, 2.0, &c).unwrap().value;
    for theta in [0.3, 1.9, -2.6] {
        let v = u.rotate_phase(theta);
        assert!(rel(local_energy(&v, &a, 2.0, &c.grid).unwrap().value, e) < 1e-12);
        assert!(rel(bbm_energy(&v, &a, &rho, 2.0, &c).unwrap().value, b) < 1e-12);
        assert!(rel(jdelta_energy(&v, &a, 1e-2, 2.0, &c).unwrap().value, j) < 1e-12);
    }
}

#[test]
fn energies_are_nonnegative() {
    for dim in 1..=2 {
        let c = cfg(dim, if dim == 1 { 96 } else { 20 }, 12);
        let rho = KernelSpec::Fractional { s: 0.9 }.build(dim).unwrap();
        for (u, a) in [
            (
                field("bump", dim, &[1.2]),
                potential("gradient_potential", dim, &[1.0]),
            ),
            (
                field("modulated_gaussian", dim, &[2.0]),
                potential("constant_potential", dim, &[1.0]),
            ),
        ] {
            for p in [1.5, 2.0, 3.0] {
                for v in [
                    local_energy(&u, &a, p, &c.grid).unwrap(),
                    bbm_energy(&u, &a, &rho, p, &c).unwrap(),
                    jdelta_energy(&u, &a, 0.05, p, &c).unwrap(),
                ] {
                    assert!(v.value >= 0.0 && v.value.is_finite());
                    assert!(v.estimated_error >= 0.0);
                }
            }
        }
    }
}

#[test]
fn lower_bound_holds_for_exponents_above_two() {
    let c = QuadConfig::new(
        BoxGrid::new(1, 8.0, 256, BoxRule::GaussLegendre).unwrap(),
        RadialGrid::new(1e-6, 32.0, 160).unwrap(),
        SphereRule::build(1, 1).unwrap(),
    )
    .unwrap();
    let u = field("modulated_gaussian", 1, &[0.6]);
    let a = potential("constant_potential", 1, &[0.4]);
    for eps in [0.1, 0.01] {
        let p = 2.0 + eps;
        let limit = p
            * q_constant(1, p, &c.sphere).unwrap().value
            * local_energy(&u, &a, p, &c.grid).unwrap().value;
        let sweep: Vec<f64> = [0.9, 0.99, 0.999]
            .iter()
            .map(|&s| {
                let rho = Mollifier::truncated_fractional(s, 16.0, 1).unwrap();
                bbm_energy(&u, &a, &rho, p, &c).unwrap().value
            })
            .collect();
        let last = sweep[2];
        assert!(last >= 0.95 * limit, "p={p}: {last} vs {limit}");
    }
}

#[test]
fn truncation_does_not_increase_jdelta() {
    let c = cfg(1, 128, 1);
    let u = field("modulated_gaussian", 1, &[1.7, 1.2]);
    let a = potential("gradient_potential", 1, &[0.8]);
    for delta in [0.2, 0.02] {
        let base = jdelta_energy(&u, &a, delta, 2.0, &c).unwrap().value;
        for m in [0.1, 0.4, 0.9, 2.0] {
            let t = truncate_field(&u, m).unwrap();
            let v = jdelta_energy(&t, &a, delta, 2.0, &c).unwrap().value;
            assert!(v <= base + 1e-12, "delta={delta} M={m}: {v} > {base}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn truncation_is_one_lipschitz(m in 0.01..5.0f64, a in prop::array::uniform4(-8.0..8.0f64)) {
        let z1 = Complex64::new(a[0], a[1]);
        let z2 = Complex64::new(a[2], a[3]);
        let u = ScalarField::new(1, "two_values", move |x: &[f64]| if x[0] < 0.0 { z1 } else { z2 }).unwrap();
        let t = truncate_field(&u, m).unwrap();
        let (t1, t2) = (t.eval(&[-1.0]), t.eval(&[1.0]));
        prop_assert!((t1 - t2).norm() <= (z1 - z2).norm() * (1.0 + 1e-15) + 1e-15);
        prop_assert!(t1.norm() <= m * (1.0 + 1e-15));
        if z1.norm() > 1e-12 {
            prop_assert!((t1 / z1).im.abs() < 1e-12 && (t1 / z1).re > 0.0);
        }
    }
}
