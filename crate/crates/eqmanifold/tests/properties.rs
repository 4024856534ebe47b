//! Property tests for the structural invariants that hold at every point,
//! not just at the frozen reference values.

use nalgebra::DVector;
use proptest::prelude::*;

use eqmanifold::economy::EconomyModel;
use eqmanifold::geodesic::{exp_map, log_map, TangentVector};
use eqmanifold::geometry::{curvature_at, metric_at};
use eqmanifold::selection::{project_tangent, PerturbedState};

fn tanh_sin3() -> EconomyModel {
    EconomyModel::tanh_sin(3, 0.5, 0.3, 1.0, 0.0).unwrap()
}

fn fold3() -> EconomyModel {
    EconomyModel::fold(3, 0.5, 2.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn embedding_is_idempotent(t in -3.0..3.0f64, a1 in -2.0..2.0f64, a2 in -2.0..2.0f64) {
        for model in [tanh_sin3(), fold3()] {
            let pt = model.embed(t, &[a1, a2]).unwrap();
            let again = model.embed(pt.t(), pt.alpha().as_slice()).unwrap();
            prop_assert_eq!(pt.ambient(), again.ambient());
        }
    }

    #[test]
    fn metric_inverse_and_curvature_signs(t in -2.9..2.9f64, a1 in -1.0..1.0f64, a2 in -1.0..1.0f64) {
        for model in [tanh_sin3(), fold3()] {
            let pt = model.embed(t, &[a1, a2]).unwrap();
            let md = metric_at(&model, &pt).unwrap();
            prop_assert!(md.det_g > 0.0);
            let id = &md.g * &md.g_inv;
            prop_assert!((id - nalgebra::DMatrix::identity(3, 3)).abs().max() < 1e-10);
            let cr = curvature_at(&model, &pt).unwrap();
            prop_assert!(cr.inner_r.max() <= 1e-12);
            prop_assert!(cr.sec_ij_max_abs <= 1e-10);
        }
    }

    #[test]
    fn projection_minimizes_ambient_distance(
        t in -2.0..2.0f64,
        a1 in -0.8..0.8f64,
        a2 in -0.8..0.8f64,
        dz in proptest::array::uniform5(-0.5..0.5f64),
    ) {
        let model = tanh_sin3();
        let base = model.embed(t, &[a1, a2]).unwrap();
        let z = base.ambient() + DVector::from_column_slice(&dz);
        let st = PerturbedState {
            base: base.clone(),
            new_endowment: z.rows(2, 3).into_owned(),
            ambient_z: z.clone(),
        };
        let v = project_tangent(&model, &st).unwrap();
        let basis = model.basis_fields(&base).unwrap();
        let residual = &z - base.ambient() - &basis * &v.coeffs;
        // first-order optimality: the residual is orthogonal to the span
        let grad = basis.transpose() * residual;
        prop_assert!(grad.amax() < 1e-10, "gradient {:e}", grad.amax());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn exp_log_round_trip_within_unit_ball(
        t in -1.2..1.2f64,
        a1 in -0.6..0.6f64,
        a2 in -0.6..0.6f64,
        c in proptest::array::uniform3(-1.0..1.0f64),
    ) {
        let model = tanh_sin3();
        let base = model.embed(t, &[a1, a2]).unwrap();
        let mut v = TangentVector::new(base.clone(), DVector::from_column_slice(&c));
        let norm = v.g_norm(&model).unwrap();
        if norm > 1.0 {
            v.coeffs /= norm;
        }
        let (end, _) = exp_map(&model, &v).unwrap();
        let back = log_map(&model, &base, &end).unwrap();
        prop_assert!((back.coeffs - &v.coeffs).amax() < 1e-7);
    }

    #[test]
    fn exp_scaling_matches_dense_path(
        t in -1.0..1.0f64,
        c in proptest::array::uniform3(-0.8..0.8f64),
        frac in 0.05..0.95f64,
    ) {
        let model = tanh_sin3();
        let base = model.embed(t, &[0.1, -0.1]).unwrap();
        let v = TangentVector::new(base.clone(), DVector::from_column_slice(&c));
        let (_, path) = exp_map(&model, &v).unwrap();
        let scaled = TangentVector::new(base, &v.coeffs * frac);
        let (end, _) = exp_map(&model, &scaled).unwrap();
        prop_assert!((end.coords() - path.coords_at(frac)).amax() < 1e-8);
    }
}
