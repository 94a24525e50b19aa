use grassls_core::geometry::{
    chordal_distance, exp_map, principal_angles, projection_matrix, random_orthogonal,
    random_point, random_tangent, tangent_project, HorizontalTangent,
};
use grassls_core::objective::{
    cost, penalized_grads, penalized_value, softplus, squared_center_distance, ObjectivePoint,
    PenaltyParams,
};
use grassls_core::oracles::random_instance;
use grassls_core::solver::random_init;
use nalgebra::DMatrix;
use proptest::prelude::*;

/// `(n, k)` with `1 <= k < n <= 8`, `k <= 3`.
fn dims() -> impl Strategy<Value = (usize, usize)> {
    (2usize..=8).prop_flat_map(|n| (Just(n), 1usize..=3.min(n - 1)))
}

fn params() -> impl Strategy<Value = PenaltyParams> {
    (prop::sample::select(vec![0.0, 1.0, 70.0]), prop::sample::select(vec![0.01, 0.1]))
        .prop_map(|(l, u)| PenaltyParams::new(l, u).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn objective_ignores_representative((n, k) in dims(), seed in any::<u64>(), params in params()) {
        let inst = random_instance(n, k, seed).unwrap();
        let p = random_init(&inst, seed ^ 0x5a5a).unwrap();
        let q = random_orthogonal(k, seed.wrapping_add(1));
        let rotated = ObjectivePoint::new(p.x.clone(), p.y.rotate_rep(&q).unwrap());

        let c = cost(&p, &inst).unwrap();
        prop_assert!((c - cost(&rotated, &inst).unwrap()).abs() <= 1e-10 * (1.0 + c.abs()));
        let v = penalized_value(&p, &inst, &params).unwrap();
        prop_assert!((v - penalized_value(&rotated, &inst, &params).unwrap()).abs() <= 1e-10 * (1.0 + v.abs()));

        // x-gradients agree; y-gradients transform as G ↦ G·Q.
        let g = penalized_grads(&p, &inst, &params).unwrap();
        let gr = penalized_grads(&rotated, &inst, &params).unwrap();
        prop_assert!((&g.x - &gr.x).norm() <= 1e-9 * (1.0 + g.x.norm()));
        let moved = g.y.matrix() * &q;
        prop_assert!((moved - gr.y.matrix()).norm() <= 1e-9 * (1.0 + g.y.norm()));
    }

    #[test]
    fn projection_is_symmetric_idempotent((n, k) in dims(), seed in any::<u64>()) {
        let y = random_point(n, k, seed).unwrap();
        let p = projection_matrix(&y);
        prop_assert!((&p * &p - &p).norm() <= 1e-12);
        prop_assert!((&p - p.transpose()).norm() <= 1e-14);
        prop_assert!((p.trace() - k as f64).abs() <= 1e-12);
    }

    #[test]
    fn tangent_projection_is_horizontal_and_idempotent((n, k) in dims(), seed in any::<u64>(), entries in prop::collection::vec(-5.0f64..5.0, 24)) {
        let y = random_point(n, k, seed).unwrap();
        let g = DMatrix::from_fn(n, k, |i, j| entries[(i * k + j) % entries.len()]);
        let h = tangent_project(y.rep(), &g).unwrap();
        prop_assert!(h.horizontality_defect() <= 1e-12 * (1.0 + g.norm()));
        let again = tangent_project(y.rep(), h.matrix()).unwrap();
        prop_assert!((again.matrix() - h.matrix()).norm() <= 1e-12 * (1.0 + g.norm()));
    }

    #[test]
    fn exp_map_stays_on_manifold((n, k) in dims(), seed in any::<u64>(), scale in 0.0f64..10.0) {
        let y = random_point(n, k, seed).unwrap();
        let h = random_tangent(y.rep(), seed.wrapping_add(9), scale).unwrap();
        let z = exp_map(y.rep(), &h).unwrap();
        prop_assert!(z.rep().defect() <= 1e-10);
        prop_assert_eq!(z.rep().shape(), (n, k));
    }

    #[test]
    fn exp_map_is_first_order_accurate((n, k) in dims(), seed in any::<u64>()) {
        let y = random_point(n, k, seed).unwrap();
        let h = random_tangent(y.rep(), seed.wrapping_add(3), 1.0).unwrap();
        let small = h.scale(1e-3 / h.norm());
        let z = exp_map(y.rep(), &small).unwrap();
        let ratio = chordal_distance(&y, &z).unwrap() / small.norm();
        prop_assert!((ratio - 1.0).abs() <= 1e-4, "ratio {}", ratio);
        let zero = exp_map(y.rep(), &HorizontalTangent::zero(y.rep())).unwrap();
        prop_assert!(zero.same_subspace(&y).unwrap());
    }

    #[test]
    fn distance_bounds_and_forms_agree((n, k) in dims(), seed in any::<u64>()) {
        let a = random_point(n, k, seed).unwrap();
        let b = random_point(n, k, seed.wrapping_add(1)).unwrap();
        let d = chordal_distance(&a, &b).unwrap();
        prop_assert!((0.0..=(k as f64).sqrt() + 1e-12).contains(&d));
        let pa = principal_angles(&a, &b).unwrap();
        let angles = pa.angles();
        prop_assert!(angles.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(angles.iter().all(|t| (0.0..=std::f64::consts::FRAC_PI_2).contains(t)));
        prop_assert!((pa.chordal() - d).abs() <= 1e-10);

        let inst = random_instance(n, k, seed).unwrap();
        let t = squared_center_distance(&a, &inst).unwrap();
        let direct = chordal_distance(&a, inst.y_hat()).unwrap();
        prop_assert!((t - direct * direct).abs() <= 1e-12);
    }

    #[test]
    fn softplus_sandwich(z in -800.0f64..800.0) {
        let s = softplus(z);
        prop_assert!(s.is_finite());
        prop_assert!(s >= z.max(0.0));
        prop_assert!(s <= z.max(0.0) + std::f64::consts::LN_2 * (1.0 + 1e-15));
    }
}
