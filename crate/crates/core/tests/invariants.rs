//! Property tests for the structural invariants, sampled over random points
//! of every built-in system, flat and curved.

use lpr_core::dynamics::{ambient_to_bundle, bundle_to_ambient, lagrangian_original, AmbientState};
use lpr_core::gauge::{from_bundle, projectors, to_bundle, BundlePoint};
use lpr_core::linalg::{Mat, Vector};
use lpr_core::systems::{builtin_with, BuiltinKind, BuiltinParameters};
use lpr_core::MechanicalSystem;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn system(kind: BuiltinKind, curved: bool) -> MechanicalSystem {
    let p = if curved {
        BuiltinParameters {
            metric_conformal: 0.15,
            gauge_curvature: 0.3,
            ..BuiltinParameters::default()
        }
    } else {
        BuiltinParameters::default()
    };
    builtin_with(kind, &p).unwrap()
}

fn kinds() -> impl Strategy<Value = (BuiltinKind, bool)> {
    (prop::sample::select(BuiltinKind::ALL.to_vec()), any::<bool>())
}

fn max_abs(m: &Mat) -> f64 {
    m.amax()
}

fn dist(a: &Vector, b: &Vector) -> f64 {
    (a - b).amax()
}

fn point(sys: &MechanicalSystem, seed: u64) -> (BundlePoint, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (sys.random_bundle_point(&mut rng), rng)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projectors_are_idempotent_and_annihilate_orbits((kind, curved) in kinds(), seed: u64) {
        let sys = system(kind, curved);
        let (b, _) = point(&sys, seed);
        let ps = projectors(&sys, &b.q_star, &b.f_tilde).unwrap();
        prop_assert!(max_abs(&(&ps.n * &ps.n - &ps.n)) < 1e-10);
        prop_assert!(max_abs(&(&ps.p_perp * &ps.p_perp - &ps.p_perp)) < 1e-10);
        let k = sys.action.killing_p(&b.q_star).unwrap();
        let kv = sys.action.killing_v(&b.f_tilde);
        let mut kt = Mat::zeros(k.nrows() + kv.nrows(), k.ncols());
        kt.view_mut((0, 0), k.shape()).copy_from(&k);
        kt.view_mut((k.nrows(), 0), kv.shape()).copy_from(&kv);
        prop_assert!(max_abs(&(&ps.n * &kt)) < 1e-10);
    }

    #[test]
    fn bundle_chart_round_trips((kind, curved) in kinds(), seed: u64) {
        let sys = system(kind, curved);
        let (b, _) = point(&sys, seed);
        let (q, f) = from_bundle(&sys, &b).unwrap();
        let back = to_bundle(&sys, &q, &f, Some(&b.a)).unwrap();
        prop_assert!(dist(&back.q_star, &b.q_star) < 1e-10);
        prop_assert!(dist(&back.f_tilde, &b.f_tilde) < 1e-10);
        prop_assert!(dist(&back.a, &b.a) < 1e-10);
    }

    #[test]
    fn potential_is_invariant((kind, curved) in kinds(), seed: u64) {
        let sys = system(kind, curved);
        let (b, mut rng) = point(&sys, seed);
        let g = sys.random_group_element(&mut rng);
        let (q, f) = sys.action.act(&b.q_star, &b.f_tilde, &g).unwrap();
        let v0 = sys.potential.value(&b.q_star, &b.f_tilde);
        prop_assert!((sys.potential.value(&q, &f) - v0).abs() < 1e-12 * v0.abs().max(1.0));
    }

    #[test]
    fn velocity_map_round_trips_and_preserves_lagrangian((kind, curved) in kinds(), seed: u64) {
        let sys = system(kind, curved);
        let (b, mut rng) = point(&sys, seed);
        let (q, f) = from_bundle(&sys, &b).unwrap();
        let (np, nv, _) = sys.dims();
        let s = AmbientState {
            q,
            f,
            q_dot: Vector::from_fn(np, |_, _| rng.random_range(-1.0..1.0)),
            f_dot: Vector::from_fn(nv, |_, _| rng.random_range(-1.0..1.0)),
        };
        let bs = ambient_to_bundle(&sys, &s, Some(&b.a)).unwrap();
        let back = bundle_to_ambient(&sys, &bs).unwrap();
        prop_assert!(dist(&back.q_dot, &s.q_dot) < 1e-10);
        prop_assert!(dist(&back.f_dot, &s.f_dot) < 1e-10);
        prop_assert!((lagrangian_original(&sys, &back) - lagrangian_original(&sys, &s)).abs() < 1e-10);
    }
}
