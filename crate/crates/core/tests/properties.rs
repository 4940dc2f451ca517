use std::f64::consts::PI;

use proptest::prelude::*;

use flowlab_core::fields::{field_rng, random_nonnegative_field, random_smooth_field};
use flowlab_core::inequality::{holder_gradient_check, sobolev_quotient, verify_jensen_step, verify_log_sobolev_q};
use flowlab_core::manifold::{make_conformal_s2, make_flat_torus, make_round_sphere, rescale_metric};
use flowlab_core::noncollapse::{fixed_point_kappa, geodesic_ball, kappa_formula};
use flowlab_core::semigroup::{q_to_infty_check, shifted_constant};
use flowlab_core::{ConformalPreset, DiscreteMetric, HeatSemigroup, MetricState, Pole, ScalarField, SobolevExponents};

fn state(kind: u8, a: f64) -> MetricState {
    match kind % 3 {
        0 => make_round_sphere(2, 1.0 + a.abs()).unwrap(),
        1 => make_conformal_s2(48, ConformalPreset::Bumped { a, b: 0.5 * a }).unwrap(),
        _ => make_flat_torus(2, vec![1.0 + a.abs(), 2.0]).unwrap(),
    }
}

fn field(m: &DiscreteMetric, seed: u64, passes: usize) -> ScalarField {
    let mut rng = field_rng(seed, 3);
    ScalarField::new(m.grid().clone(), random_smooth_field(m.grid(), &mut rng, passes)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exponent_identity(n in 2usize..7, frac in 0.0f64..0.999) {
        let q = 1.0 + frac * (n as f64 - 1.0);
        let e = SobolevExponents::new(n, q).unwrap();
        prop_assert!((1.0 / e.p() - (1.0 / q - 1.0 / n as f64)).abs() < 1e-12);
        prop_assert!((e.entropy_factor() - 2.0 * n as f64 / q).abs() < 1e-9 * e.entropy_factor());
    }

    #[test]
    fn jensen_and_log_sobolev_margins(kind in 0u8..3, a in -0.4f64..0.4, seed in any::<u64>(),
                                      passes in 1usize..24, qf in 0.0f64..0.9) {
        let m = DiscreteMetric::new(&state(kind, a), 48).unwrap();
        let u = field(&m, seed, passes);
        prop_assume!(u.values().iter().any(|v| *v != 0.0));
        let e = SobolevExponents::new(2, 1.0 + qf).unwrap();
        prop_assert!(verify_jensen_step(&u, &e, &m).unwrap().margin >= -1e-10);
        let ls = verify_log_sobolev_q(&u, &e, &m, 1.0).unwrap();
        prop_assert!(ls.derivation.margin >= -1e-10);
    }

    #[test]
    fn holder_margin(kind in 0u8..3, a in -0.4f64..0.4, seed in any::<u64>(), mu in 1.0f64..2.0) {
        let m = DiscreteMetric::new(&state(kind, a), 48).unwrap();
        let u = field(&m, seed, 6);
        prop_assume!(u.values().iter().any(|v| *v != 0.0));
        prop_assert!(holder_gradient_check(&u, mu, &m).unwrap().margin >= -1e-10);
    }

    #[test]
    fn quotient_is_invariant_under_scaling(seed in any::<u64>(), c in 1e-3f64..1e3, s in 0.1f64..10.0) {
        let st = make_conformal_s2(48, ConformalPreset::Bumped { a: 0.2, b: 0.0 }).unwrap();
        let m = DiscreteMetric::new(&st, 48).unwrap();
        let ms = DiscreteMetric::new(&rescale_metric(&st, s).unwrap(), 48).unwrap();
        let u = field(&m, seed, 8);
        prop_assume!(u.max_abs() > 1e-6);
        let e = SobolevExponents::new(2, 1.25).unwrap();
        let base = sobolev_quotient(&u, &e, &m).unwrap();
        prop_assert!((sobolev_quotient(&u.scaled(c), &e, &m).unwrap() / base - 1.0).abs() < 1e-10);
        let moved = ScalarField::new(ms.grid().clone(), u.values().to_vec()).unwrap();
        prop_assert!((sobolev_quotient(&moved, &e, &ms).unwrap() / base - 1.0).abs() < 1e-9);
    }

    #[test]
    fn kappa_never_exceeds_fixed_point(n in 2usize..6, frac in 0.01f64..0.99, a in 0.05f64..20.0,
                                       rho in 0.05f64..10.0, r0m in 0.0f64..5.0) {
        let q = 1.0 + frac * (n as f64 - 1.0);
        let k = kappa_formula(n, q, a, rho, r0m).unwrap();
        prop_assert!(k > 0.0 && k <= fixed_point_kappa(n, q, a).unwrap());
    }

    #[test]
    fn heat_flow_preserves_positivity(kind in 0u8..3, a in -0.4f64..0.4, seed in any::<u64>(),
                                      t in 1e-4f64..3.0) {
        let m = DiscreteMetric::new(&state(kind, a), 48).unwrap();
        let sg = HeatSemigroup::new(&m, 0.0).unwrap();
        let mut rng = field_rng(seed, 4);
        let u = ScalarField::new(m.grid().clone(), random_nonnegative_field(m.grid(), &mut rng, 5)).unwrap();
        let out = sg.apply(t, &u).unwrap();
        prop_assert!(out.min() >= -1e-10 * u.max_abs());
    }

    #[test]
    fn rescaling_is_coherent(c in 0.05f64..20.0, r in 0.05f64..1.0) {
        let st = make_conformal_s2(64, ConformalPreset::Bumped { a: 0.25, b: -0.1 }).unwrap();
        let sc = rescale_metric(&st, c).unwrap();
        prop_assert!((sc.volume() / (c * st.volume()) - 1.0).abs() < 1e-12);
        prop_assert!((sc.total_scalar_curvature() / st.total_scalar_curvature() - 1.0).abs() < 1e-9);
        let m = DiscreteMetric::new(&st, 64).unwrap();
        let ms = DiscreteMetric::new(&sc, 64).unwrap();
        let b = geodesic_ball(&m, r, Pole::North).unwrap();
        let bs = geodesic_ball(&ms, r * c.sqrt(), Pole::North).unwrap();
        prop_assert!((bs.volume / (c * b.volume) - 1.0).abs() < 1e-9);
        prop_assert!((bs.max_curvature * c / b.max_curvature - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ball_volume_is_monotone(a in -0.4f64..0.4, r1 in 0.01f64..1.5, dr in 0.0f64..1.0) {
        let m = DiscreteMetric::new(&make_conformal_s2(64, ConformalPreset::Bumped { a, b: 0.0 }).unwrap(), 64).unwrap();
        let v1 = geodesic_ball(&m, r1, Pole::North).unwrap().volume;
        let v2 = geodesic_ball(&m, r1 + dr, Pole::North).unwrap().volume;
        prop_assert!(v2 >= v1);
        prop_assert!(v2 <= m.volume() * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn q_to_infinity_bound_holds(q in 1.0f64..3.0, t in 0.01f64..10.0) {
        let m = DiscreteMetric::new(&make_round_sphere(2, 1.0).unwrap(), 64).unwrap();
        let sh = HeatSemigroup::new(&m, 1.0).unwrap();
        let c6 = shifted_constant(&sh).unwrap();
        let r = q_to_infty_check(&sh, t, q, c6).unwrap();
        prop_assert!(r.pass, "{r:?}");
    }
}

#[test]
fn torus_balls_are_flat() {
    let m = DiscreteMetric::new(&make_flat_torus(2, vec![3.0, 4.0]).unwrap(), 64).unwrap();
    for r in [0.1, 0.7, 1.4] {
        let b = geodesic_ball(&m, r, Pole::North).unwrap();
        assert!((b.volume - PI * r * r).abs() < 1e-12);
    }
}
