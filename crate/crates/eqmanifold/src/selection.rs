//! Price selection after an endowment perturbation: project the perturbed
//! pair onto the tangent plane at the old equilibrium, then follow the
//! geodesic named by the projection. Also locates all equilibria over a given
//! endowment and checks the zero-curvature/uniqueness equivalence.

use nalgebra::DVector;

use crate::economy::{EconomyModel, ManifoldPoint, VALIDATION_GRID};
use crate::error::{Error, Result};
use crate::geodesic::{exp_map, GeodesicPath, TangentVector};
use crate::geometry::{curvature_at, metric_at};

/// Residual threshold at which the refinement loop declares the landed point
/// to lie on the target fiber.
pub const REFINE_TOL: f64 = 1e-10;
/// Refinement iteration cap; reaching it is reported, not an error.
pub const MAX_REFINE_ITERATIONS: usize = 100;
/// Consecutive non-improving refinement steps before a stall error.
const STALL_LIMIT: usize = 10;

/// Number of grid cells scanned for sign changes of the fiber equation.
pub const ROOT_SCAN_GRID: usize = 2048;
/// Bisection is run until the bracket is narrower than this.
pub const ROOT_BISECTION_TOL: f64 = 1e-12;
/// |h'(root)| below this marks a near-tangency (singular economy nearby).
pub const TANGENCY_TOL: f64 = 1e-8;

/// An out-of-equilibrium pair `z = (p(t_base), omega')`: old prices, new
/// endowment for consumer 1 (consumer 2 holds the complement implicitly).
#[derive(Debug, Clone)]
pub struct PerturbedState {
    pub base: ManifoldPoint,
    /// Consumer 1's new endowment, all L goods.
    pub new_endowment: DVector<f64>,
    /// `(p(t_base), omega_bar', omega'_L)` in ambient coordinates.
    pub ambient_z: DVector<f64>,
}

impl PerturbedState {
    pub fn new(model: &EconomyModel, base: ManifoldPoint, new_endowment: &[f64]) -> Result<Self> {
        let l = model.goods();
        if new_endowment.len() != l {
            return Err(Error::Validation(format!(
                "new endowment has length {}, expected L = {l}",
                new_endowment.len()
            )));
        }
        if new_endowment.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("new endowment must be finite".into()));
        }
        let mut z = DVector::zeros(2 * l - 1);
        z.rows_mut(0, l - 1).copy_from(&base.ambient().rows(0, l - 1));
        for (i, &w) in new_endowment.iter().enumerate() {
            z[l - 1 + i] = w;
        }
        Ok(PerturbedState {
            base,
            new_endowment: DVector::from_column_slice(new_endowment),
            ambient_z: z,
        })
    }
}

/// Outcome of one selection run.
#[derive(Debug, Clone)]
pub struct SelectionResult {
    /// The projected tangent vector at the original base point.
    pub v: TangentVector,
    /// The selected equilibrium.
    pub landed: ManifoldPoint,
    /// Prices at the landed point.
    pub price_new: DVector<f64>,
    /// Euclidean distance between the landed endowment and `omega'`.
    pub endowment_residual: f64,
    /// Number of projection/shoot rounds performed (1 without refinement).
    pub iterations: usize,
    /// The geodesic of the final shot.
    pub path: GeodesicPath,
}

/// g-orthogonal projection of `z - Phi(x)` onto the tangent plane at the
/// base point: solves the Gram system `g c = Phi^T (z - Phi(x))`.
pub fn project_tangent(model: &EconomyModel, state: &PerturbedState) -> Result<TangentVector> {
    let basis = model.basis_fields(&state.base)?;
    let md = metric_at(model, &state.base)?;
    let diff = &state.ambient_z - state.base.ambient();
    let rhs = basis.transpose() * diff;
    let coeffs = md.g.clone().lu().solve(&rhs).ok_or(Error::SingularMetric {
        det_g: md.det_g,
        t: state.base.t(),
    })?;
    Ok(TangentVector::new(state.base.clone(), coeffs))
}

/// The selection operator: project, then shoot the geodesic. With `refine`
/// the projection/shoot round is iterated from each landed point until the
/// landed endowment matches `omega'` (the landed point sits on the fiber),
/// up to [`MAX_REFINE_ITERATIONS`].
pub fn select(model: &EconomyModel, state: &PerturbedState, refine: bool) -> Result<SelectionResult> {
    let l = model.goods();
    let mut current = state.base.clone();
    let mut first_v: Option<TangentVector> = None;
    let mut iterations = 0;
    let mut best = f64::INFINITY;
    let mut no_progress = 0;
    loop {
        iterations += 1;
        let round = PerturbedState::new(model, current.clone(), state.new_endowment.as_slice())?;
        let v = project_tangent(model, &round)?;
        if first_v.is_none() {
            first_v = Some(v.clone());
        }
        let (landed, path) = exp_map(model, &v)?;
        let residual = (landed.endowment() - &state.new_endowment).norm();
        current = landed;
        if !refine || residual < REFINE_TOL || iterations >= MAX_REFINE_ITERATIONS {
            let price_new = current.ambient().rows(0, l - 1).into_owned();
            return Ok(SelectionResult {
                v: first_v.expect("set on first round"),
                landed: current,
                price_new,
                endowment_residual: residual,
                iterations,
                path,
            });
        }
        if residual + 1e-16 >= best {
            no_progress += 1;
            if no_progress >= STALL_LIMIT {
                return Err(Error::RefinementStall { iterations, residual });
            }
        } else {
            no_progress = 0;
        }
        best = best.min(residual);
    }
}

/// An equilibrium root of the fiber equation together with diagnostics.
#[derive(Debug, Clone)]
pub struct EquilibriumRoot {
    pub point: ManifoldPoint,
    /// `h'(t) = w' - <p', alpha_bar>` at the root.
    pub fiber_slope: f64,
    /// Near-tangency: the branch structure degenerates at this endowment.
    pub tangency: bool,
}

/// All equilibria supporting a given endowment for consumer 1: the roots of
/// `h(t) = w(t) - <p(t), alpha_bar> - omega_L` on the certified domain,
/// located by a sign-change scan and bisection, returned sorted by t.
pub fn find_equilibria(model: &EconomyModel, endowment: &[f64]) -> Result<Vec<ManifoldPoint>> {
    Ok(find_equilibria_detailed(model, endowment)?
        .into_iter()
        .map(|r| r.point)
        .collect())
}

/// As [`find_equilibria`], with the fiber slope and tangency flag per root.
pub fn find_equilibria_detailed(
    model: &EconomyModel,
    endowment: &[f64],
) -> Result<Vec<EquilibriumRoot>> {
    let l = model.goods();
    if endowment.len() != l {
        return Err(Error::Validation(format!(
            "endowment has length {}, expected L = {l}",
            endowment.len()
        )));
    }
    if endowment.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation("endowment must be finite".into()));
    }
    let alpha_bar = &endowment[..l - 1];
    let omega_l = endowment[l - 1];
    let h = |t: f64| -> f64 {
        let p = model.price(t);
        let spent: f64 = p.iter().zip(alpha_bar).map(|(pi, ai)| pi * ai).sum();
        model.income(t) - spent - omega_l
    };
    let (t0, t1) = model.domain();
    let n = ROOT_SCAN_GRID;
    let grid = |k: usize| t0 + (t1 - t0) * k as f64 / n as f64;

    let mut roots: Vec<f64> = Vec::new();
    let push_root = |roots: &mut Vec<f64>, t: f64| {
        if roots.last().map_or(true, |&prev| (t - prev).abs() > 1e-9) {
            roots.push(t);
        }
    };
    let mut prev_t = grid(0);
    let mut prev_h = h(prev_t);
    if prev_h == 0.0 {
        push_root(&mut roots, prev_t);
    }
    for k in 1..=n {
        let cur_t = grid(k);
        let cur_h = h(cur_t);
        if cur_h == 0.0 {
            push_root(&mut roots, cur_t);
        } else if prev_h != 0.0 && prev_h.signum() != cur_h.signum() {
            let (mut a, mut b) = (prev_t, cur_t);
            let mut ha = prev_h;
            while b - a > ROOT_BISECTION_TOL {
                let mid = 0.5 * (a + b);
                let hm = h(mid);
                if hm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if ha.signum() != hm.signum() {
                    b = mid;
                } else {
                    a = mid;
                    ha = hm;
                }
            }
            push_root(&mut roots, 0.5 * (a + b));
        }
        prev_t = cur_t;
        prev_h = cur_h;
    }

    roots
        .into_iter()
        .map(|t| {
            let dp = model.price_d1(t);
            let slope = model.income_d1(t)
                - dp.iter().zip(alpha_bar).map(|(di, ai)| di * ai).sum::<f64>();
            Ok(EquilibriumRoot {
                point: model.embed(t, alpha_bar)?,
                fiber_slope: slope,
                tangency: slope.abs() < TANGENCY_TOL,
            })
        })
        .collect()
}

/// Desk-scale check of the zero-curvature/uniqueness equivalence: samples
/// `p_i'` and the curvature inner products on a t-grid (alpha = 0) and flags
/// the model unique exactly when the prices are constant.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct UniquenessReport {
    pub unique: bool,
    pub max_abs_p_prime: f64,
    pub max_abs_inner_r: f64,
}

pub fn uniqueness_check(model: &EconomyModel) -> Result<UniquenessReport> {
    let (t0, t1) = model.domain();
    let n = VALIDATION_GRID;
    let alpha = vec![0.0; model.goods() - 1];
    let mut max_dp: f64 = 0.0;
    let mut max_inner: f64 = 0.0;
    for k in 0..n {
        let t = t0 + (t1 - t0) * k as f64 / (n - 1) as f64;
        for d in model.price_d1(t) {
            max_dp = max_dp.max(d.abs());
        }
        let cr = curvature_at(model, &model.embed(t, &alpha)?)?;
        max_inner = max_inner.max(cr.inner_r.abs().max());
    }
    Ok(UniquenessReport { unique: max_dp < 1e-10, max_abs_p_prime: max_dp, max_abs_inner_r: max_inner })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn tanh_sin3() -> EconomyModel {
        EconomyModel::tanh_sin(3, 0.5, 0.3, 1.0, 0.0).unwrap()
    }

    fn fold3() -> EconomyModel {
        EconomyModel::fold(3, 0.5, 2.0).unwrap()
    }

    #[test]
    fn projection_of_unperturbed_state_is_zero() {
        let m = tanh_sin3();
        let base = m.embed(0.4, &[0.3, -0.2]).unwrap();
        let endowment = base.endowment();
        let st = PerturbedState::new(&m, base, endowment.as_slice()).unwrap();
        let v = project_tangent(&m, &st).unwrap();
        assert!(v.coeffs.amax() < 1e-14);
    }

    #[test]
    fn projection_recovers_span_coefficients() {
        let m = tanh_sin3();
        let base = m.embed(-0.3, &[0.1, 0.4]).unwrap();
        let basis = m.basis_fields(&base).unwrap();
        let c = DVector::from_column_slice(&[0.7, -0.4, 0.2]);
        let z = base.ambient() + basis * &c;
        let st = PerturbedState {
            base: base.clone(),
            new_endowment: z.rows(2, 3).into_owned(),
            ambient_z: z,
        };
        let v = project_tangent(&m, &st).unwrap();
        assert!((v.coeffs - c).amax() < 1e-10);
    }

    #[test]
    fn projection_matches_high_precision_gram_solve() {
        // Frozen coefficients from a 40-digit solve of g c = Phi^T (z - Phi(x)).
        let m = tanh_sin3();
        let base = m.embed(0.0, &[0.0, 0.0]).unwrap();
        let st = PerturbedState::new(&m, base, &[0.1, -0.05, 0.97]).unwrap();
        let v = project_tangent(&m, &st).unwrap();
        assert!((v.coeffs[0] - 0.50495049504950495050).abs() < 1e-14);
        assert!((v.coeffs[1] - -0.071683168316831683168).abs() < 1e-14);
        assert!((v.coeffs[2] - -0.22168316831683168317).abs() < 1e-14);
    }

    #[test]
    fn projection_is_ambient_least_squares() {
        let m = tanh_sin3();
        let base = m.embed(0.6, &[-0.2, 0.3]).unwrap();
        let basis = m.basis_fields(&base).unwrap();
        let z: DVector<f64> =
            base.ambient() + DVector::from_column_slice(&[0.1, -0.2, 0.3, 0.05, -0.4]);
        let st = PerturbedState {
            base: base.clone(),
            new_endowment: z.rows(2, 3).into_owned(),
            ambient_z: z.clone(),
        };
        let v = project_tangent(&m, &st).unwrap();
        // dense least-squares via normal equations solved by full inverse
        let gram: DMatrix<f64> = basis.transpose() * &basis;
        let want = gram.try_inverse().unwrap() * (basis.transpose() * (z - base.ambient()));
        assert!((v.coeffs - want).amax() < 1e-10);
    }

    #[test]
    fn zero_perturbation_is_a_fixed_point_of_select() {
        let m = tanh_sin3();
        let base = m.embed(0.25, &[0.2, 0.1]).unwrap();
        let endowment = base.endowment();
        let st = PerturbedState::new(&m, base.clone(), endowment.as_slice()).unwrap();
        let res = select(&m, &st, true).unwrap();
        assert_eq!(res.iterations, 1);
        assert!(res.endowment_residual < 1e-12);
        assert!((res.landed.t() - base.t()).abs() < 1e-12);
    }

    #[test]
    fn constant_economy_always_selects_the_constant_price() {
        let m = EconomyModel::constant(3, 1.0, 1.0).unwrap();
        let base = m.embed(0.5, &[0.2, 0.3]).unwrap();
        for omega in [[0.4, 0.1, 0.8], [-0.3, 0.6, 0.2], [0.0, 0.0, 1.9]] {
            let st = PerturbedState::new(&m, base.clone(), &omega).unwrap();
            let res = select(&m, &st, true).unwrap();
            assert!((res.price_new[0] - 1.0).abs() < 1e-10);
            assert!((res.price_new[1] - 1.0).abs() < 1e-10);
            assert!(res.endowment_residual < 1e-10);
        }
    }

    #[test]
    fn select_refines_onto_the_fiber() {
        let m = tanh_sin3();
        let base = m.embed(0.3, &[0.25, -0.15]).unwrap();
        let mut omega = base.endowment();
        omega[0] += 0.05;
        omega[2] -= 0.04;
        let st = PerturbedState::new(&m, base, omega.as_slice()).unwrap();
        let res = select(&m, &st, true).unwrap();
        assert!(res.endowment_residual < REFINE_TOL, "residual {}", res.endowment_residual);
        assert!(res.iterations <= MAX_REFINE_ITERATIONS);
        // the landed point supports omega': its endowment block matches
        assert!((res.landed.endowment() - &st.new_endowment).norm() < REFINE_TOL);
    }

    #[test]
    fn one_shot_select_reports_without_refining() {
        let m = tanh_sin3();
        let base = m.embed(0.3, &[0.25, -0.15]).unwrap();
        let mut omega = base.endowment();
        omega[1] += 0.08;
        let st = PerturbedState::new(&m, base, omega.as_slice()).unwrap();
        let res = select(&m, &st, false).unwrap();
        assert_eq!(res.iterations, 1);
    }

    #[test]
    fn find_equilibria_constant_economy_affine_fiber() {
        let m = EconomyModel::constant(3, 1.0, 1.0).unwrap();
        let roots = find_equilibria(&m, &[0.5, 0.5, 2.0]).unwrap();
        assert_eq!(roots.len(), 1);
        assert!((roots[0].t() - 3.0).abs() < 1e-10);
        let none = find_equilibria(&m, &[0.5, 0.5, 2.5]).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn find_equilibria_fold_has_three_roots() {
        let m = fold3();
        let roots = find_equilibria_detailed(&m, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(roots.len(), 3);
        // roots of t = 2 tanh t, 40-digit reference
        let t_star = 1.9150080481545374814;
        assert!((roots[0].point.t() + t_star).abs() < 1e-9);
        assert!(roots[1].point.t().abs() < 1e-9);
        assert!((roots[2].point.t() - t_star).abs() < 1e-9);
        assert!(!roots[1].tangency);
        // residual invariant: |h(t_root)| below 1e-10
        for r in &roots {
            let t = r.point.t();
            let h = m.income(t);
            assert!(h.abs() < 1e-10, "|h| = {h:e}");
        }
    }

    #[test]
    fn find_equilibria_matches_dense_grid_oracle() {
        let m = tanh_sin3();
        let endowment = [0.6, -0.4, 0.35];
        let roots = find_equilibria(&m, &endowment).unwrap();
        // oracle: plain scan at 10x resolution
        let h = |t: f64| -> f64 {
            let p = m.price(t);
            m.income(t) - p[0] * endowment[0] - p[1] * endowment[1] - endowment[2]
        };
        let n = 10 * ROOT_SCAN_GRID;
        let mut oracle = Vec::new();
        let mut prev = h(-3.0);
        for k in 1..=n {
            let t = -3.0 + 6.0 * k as f64 / n as f64;
            let cur = h(t);
            if prev.signum() != cur.signum() {
                oracle.push(t);
            }
            prev = cur;
        }
        assert_eq!(roots.len(), oracle.len());
        for (r, o) in roots.iter().zip(&oracle) {
            assert!((r.t() - o).abs() < 6.0 / n as f64 + 1e-9);
        }
    }

    #[test]
    fn uniqueness_flags_match_the_families()  {
        let constant = EconomyModel::constant(3, 1.0, 1.0).unwrap();
        let rep = uniqueness_check(&constant).unwrap();
        assert!(rep.unique);
        assert!(rep.max_abs_p_prime < 1e-12);
        assert!(rep.max_abs_inner_r < 1e-12);

        let rep = uniqueness_check(&tanh_sin3()).unwrap();
        assert!(!rep.unique);
        assert!((rep.max_abs_p_prime - 0.5).abs() < 1e-3);
        assert!(rep.max_abs_inner_r > 1e-6);

        let rep = uniqueness_check(&fold3()).unwrap();
        assert!(!rep.unique);
    }

    #[test]
    fn small_perturbation_stays_on_the_fold_branch() {
        let m = fold3();
        let branches = find_equilibria(&m, &[0.0, 0.0, 0.0]).unwrap();
        let t0 = branches[1].t(); // middle branch near 0
        let gap = branches
            .iter()
            .map(|b| (b.t() - t0).abs())
            .filter(|d| *d > 1e-6)
            .fold(f64::INFINITY, f64::min);
        let base = branches[1].clone();
        let st = PerturbedState::new(&m, base, &[0.02, -0.01, 0.03]).unwrap();
        let res = select(&m, &st, true).unwrap();
        assert!((res.landed.t() - t0).abs() < 0.5 * gap);
    }
}
