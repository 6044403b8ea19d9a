use magsob_core::kernels::{
    mollifier_diagnostics, q_constant, q_quadrature, sphere_moment_identity_residual,
};
use magsob_core::{
    sphere_area, Complex64, ComplexVector, McSampler, Mollifier, RadialGrid, Regime, SphereRule,
};
use proptest::prelude::*;
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

fn q_closed_form(dim: usize, p: f64) -> f64 {
    let n = dim as f64;
    2.0 * PI.powf((n - 1.0) / 2.0) * gamma((p + 1.0) / 2.0) / gamma((n + p) / 2.0) / p
}

fn radial() -> RadialGrid {
    RadialGrid::new(1e-6, 32.0, 160).unwrap()
}

#[test]
fn both_families_are_normalized() {
    for dim in 1..=3 {
        for s in [0.5, 0.9, 0.99, 0.999] {
            let frac = Mollifier::fractional(s, dim).unwrap();
            assert_eq!(frac.regime(), Regime::UnitInterval);
            let d = mollifier_diagnostics(&frac, 0.1, &radial()).unwrap();
            assert!(
                (d.mass - 1.0).abs() < 1e-8,
                "fractional N={dim} s={s}: {}",
                d.mass
            );
            assert!((d.remark_tail.unwrap() - (1.0 - s) / s).abs() < 1e-8);
            for r in [8.0, 16.0] {
                let trunc = Mollifier::truncated_fractional(s, r, dim).unwrap();
                let d = mollifier_diagnostics(&trunc, 0.1, &radial()).unwrap();
                assert!(
                    (d.mass - 1.0).abs() < 1e-8,
                    "truncated N={dim} s={s} R={r}: {}",
                    d.mass
                );
                let tail = 1.0 - (0.1 / r).powf(2.0 - 2.0 * s);
                assert!((d.tail - tail).abs() < 1e-8);
                assert_eq!(
                    mollifier_diagnostics(&trunc, r, &radial()).unwrap().tail,
                    0.0
                );
            }
        }
    }
}

#[test]
fn truncated_tail_decreases_along_s() {
    for dim in 1..=3 {
        let tails: Vec<f64> = [0.9, 0.99, 0.999]
            .iter()
            .map(|&s| {
                let rho = Mollifier::truncated_fractional(s, 16.0, dim).unwrap();
                mollifier_diagnostics(&rho, 0.1, &radial()).unwrap().tail
            })
            .collect();
        assert!(tails.windows(2).all(|w| w[1] < w[0]), "{tails:?}");
    }
}

#[test]
fn q_matches_gamma_closed_form() {
    for (dim, order) in [(1, 1), (2, 4096), (3, 2048)] {
        let rule = SphereRule::build(dim, order).unwrap();
        for p in [1.5, 2.0, 2.5, 3.0, 4.0] {
            let q = q_constant(dim, p, &rule).unwrap();
            let want = q_closed_form(dim, p);
            assert!(
                (q.quadrature_value / want - 1.0).abs() < 1e-8,
                "N={dim} p={p}: {} vs {want}",
                q.quadrature_value
            );
        }
        let q2 = q_constant(dim, 2.0, &rule).unwrap();
        assert_eq!(q2.closed_form, Some(sphere_area(dim) / (2.0 * dim as f64)));
    }
}

#[test]
fn q_does_not_depend_on_the_reference_direction() {
    let s = McSampler::new(99, 3, 7).unwrap();
    for (dim, order) in [(2, 4096), (3, 2048)] {
        let rule = SphereRule::build(dim, order).unwrap();
        for p in [1.5, 2.0, 3.0] {
            let base = q_constant(dim, p, &rule).unwrap().quadrature_value;
            for k in 0..3 {
                let mut g = [0.0; 3];
                s.uniforms(k, &mut g);
                let mut omega: Vec<f64> = g[..dim].iter().map(|t| 2.0 * t - 1.0).collect();
                let norm = omega.iter().map(|v| v * v).sum::<f64>().sqrt();
                omega.iter_mut().for_each(|v| *v /= norm);
                let q = q_quadrature(&omega, p, &rule);
                assert!(
                    (q / base - 1.0).abs() < 1e-8,
                    "N={dim} p={p} omega={omega:?}"
                );
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn circle_identity_holds_for_complex_vectors(re in prop::collection::vec(-3.0..3.0f64, 2), im in prop::collection::vec(-3.0..3.0f64, 2)) {
        let z: Vec<Complex64> = re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect();
        let rule = SphereRule::build(2, 64).unwrap();
        let r = sphere_moment_identity_residual(&ComplexVector::from_slice(&z), 2.0, &rule).unwrap();
        prop_assert!(r <= 1e-10);
    }

    #[test]
    fn fractional_profile_is_the_stated_power(s in 0.05..0.995f64, r in 1e-4..50.0f64, dim in 1usize..=3) {
        let rho = Mollifier::fractional(s, dim).unwrap();
        let want = 2.0 * (1.0 - s) * r.powf(2.0 - 2.0 * s - dim as f64);
        prop_assert!((rho.eval(r) / want - 1.0).abs() < 1e-12);
        let t = Mollifier::truncated_fractional(s, 4.0, dim).unwrap();
        prop_assert_eq!(t.eval(4.0 + r), 0.0);
    }
}
