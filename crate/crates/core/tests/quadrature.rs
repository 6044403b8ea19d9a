use magsob_core::quadrature::{integrate_box, integrate_polar};
use magsob_core::{sphere_area, BoxGrid, BoxRule, RadialGrid, SphereRule};
use proptest::prelude::*;

type Pair = fn(&[f64], &[f64]) -> f64;

fn sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn dist_sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum()
}

const INTEGRANDS: [Pair; 5] = [
    |x, y| (-sq(x) - sq(y)).exp(),
    |x, y| (1.0 + x[0] * y[0]) * (-sq(x) - sq(y)).exp(),
    |x, y| dist_sq(x, y) * (-sq(x) - sq(y)).exp(),
    |x, y| (-dist_sq(x, y) - 0.5 * (sq(x) + sq(y))).exp(),
    |x, y| x[0].sin().powi(2) * (-sq(x) - 0.5 * sq(y)).exp(),
];

#[test]
fn polar_form_matches_direct_double_integral() {
    for (dim, nodes, order) in [(1, 96, 1), (2, 40, 48)] {
        let grid = BoxGrid::new(dim, 7.0, nodes, BoxRule::GaussLegendre).unwrap();
        let radial = RadialGrid::new(1e-9, 20.0, 160).unwrap();
        let sphere = SphereRule::build(dim, order).unwrap();
        for (k, f) in INTEGRANDS.iter().enumerate() {
            let polar = integrate_polar(
                |x, h, s| {
                    let y: Vec<f64> = x.iter().zip(s).map(|(a, b)| a + h * b).collect();
                    f(x, &y)
                },
                &grid,
                &radial,
                &sphere,
            )
            .unwrap();
            let direct =
                integrate_box(|x| integrate_box(|y| f(x, y), &grid).unwrap(), &grid).unwrap();
            let rel = (polar - direct).abs() / direct.abs();
            assert!(
                rel < 1e-5,
                "N={dim} integrand {k}: {polar} vs {direct} ({rel:.2e})"
            );
        }
    }
}

#[test]
fn sphere_rules_integrate_quadratics() {
    for dim in 1..=3 {
        for order in [3, 5, 16] {
            let rule = SphereRule::build(dim, order).unwrap();
            let total = rule.total_weight();
            assert!((total / sphere_area(dim) - 1.0).abs() < 1e-10);
            for (s, _) in rule.nodes() {
                assert!((sq(&s[..dim]) - 1.0).abs() < 1e-14);
            }
            for i in 0..dim {
                for j in 0..dim {
                    let m: f64 = rule.nodes().iter().map(|(s, w)| w * s[i] * s[j]).sum();
                    let want = if i == j {
                        sphere_area(dim) / dim as f64
                    } else {
                        0.0
                    };
                    assert!(
                        (m - want).abs() < 1e-10,
                        "N={dim} order={order} ({i},{j}): {m}"
                    );
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn box_weights_sum_to_volume(dim in 1usize..=3, radius in 0.1..20.0f64, nodes in 1usize..40, trap in any::<bool>()) {
        let rule = if trap { BoxRule::Trapezoid } else { BoxRule::GaussLegendre };
        let nodes = if trap { nodes.max(2) } else { nodes };
        let grid = BoxGrid::new(dim, radius, nodes, rule).unwrap();
        let total: f64 = grid.iter().map(|(_, w)| w).sum();
        prop_assert!(grid.iter().all(|(_, w)| w > 0.0));
        prop_assert!((total / (2.0 * radius).powi(dim as i32) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn radial_rule_is_exact_on_powers(h_min in 1e-8..1e-2f64, h_max in 1.0..50.0f64, q in -0.9..3.0f64) {
        let radial = RadialGrid::new(h_min, h_max, 160).unwrap();
        let v: f64 = radial.rule(h_min, h_max).iter().map(|(h, w)| w * h.powf(q)).sum();
        let want = (h_max.powf(q + 1.0) - h_min.powf(q + 1.0)) / (q + 1.0);
        prop_assert!((v / want - 1.0).abs() < 1e-10);
        let s = radial.samples();
        prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn sums_do_not_depend_on_thread_count(threads in 1usize..9, freq in 0.1..4.0f64) {
        let grid = BoxGrid::new(2, 3.0, 41, BoxRule::GaussLegendre).unwrap();
        let f = |x: &[f64]| (freq * x[0]).cos() * (-x[1] * x[1]).exp();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let a = pool.install(|| integrate_box(f, &grid).unwrap());
        let b = integrate_box(f, &grid).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }
}
