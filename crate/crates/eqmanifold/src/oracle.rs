//! Independent verification pipeline: induced metric from a central-difference
//! Jacobian of the embedding, Christoffel symbols from central differences of
//! that metric, and curvature coefficients from central differences of those
//! Christoffels.
//!
//! Nothing here touches the closed forms or the analytic derivative maps; the
//! embedding map is the only shared input. For the built-in families the whole
//! cascade runs in double-double arithmetic (see [`crate::dd`]) so that each
//! nested difference level stays truncation-dominated at the configured step;
//! custom economies fall back to f64 with correspondingly weaker guarantees.

use nalgebra::DMatrix;

use crate::dd::Dd;
use crate::economy::{EconomyModel, Field, ManifoldPoint};
use crate::error::{Error, Result};
use crate::geometry::{ChristoffelField, RiemannTensor};

/// Finite-difference configuration.
#[derive(Debug, Clone, Copy)]
pub struct FdConfig {
    /// Central-difference step (default 1e-5).
    pub step_h: f64,
    /// One level of Richardson extrapolation (default on).
    pub richardson: bool,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig { step_h: 1e-5, richardson: true }
    }
}

impl FdConfig {
    fn validate(&self) -> Result<()> {
        if !(1e-8..=1e-2).contains(&self.step_h) {
            return Err(Error::Validation(format!(
                "step_h must lie in [1e-8, 1e-2] (got {})",
                self.step_h
            )));
        }
        Ok(())
    }
}

/// `J^T J` where `J` is the central-difference Jacobian of the embedding with
/// respect to `(t, alpha)`.
pub fn metric_numeric(
    model: &EconomyModel,
    point: &ManifoldPoint,
    cfg: &FdConfig,
) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    require_margin(model, point.t(), 2.0 * cfg.step_h)?;
    let l = model.goods();
    let flat = dispatch(model, point, cfg, metric_flat::<f64>, metric_flat::<Dd>)?;
    Ok(DMatrix::from_fn(l, l, |i, j| flat[i * l + j]))
}

/// Christoffel symbols from central differences of [`metric_numeric`] plus
/// numeric inversion of the metric.
pub fn christoffel_numeric(
    model: &EconomyModel,
    point: &ManifoldPoint,
    cfg: &FdConfig,
) -> Result<ChristoffelField> {
    cfg.validate()?;
    require_margin(model, point.t(), 2.0 * cfg.step_h)?;
    let l = model.goods();
    let flat = dispatch(model, point, cfg, christoffel_flat::<f64>, christoffel_flat::<Dd>)?;
    let gamma = (0..l)
        .map(|k| DMatrix::from_fn(l, l, |i, j| flat[(k * l + i) * l + j]))
        .collect();
    Ok(ChristoffelField::from_parts(gamma))
}

/// Curvature coefficients `R^s_{ijk}` from the coordinate formula, with
/// Christoffel derivatives by central differences of [`christoffel_numeric`].
pub fn curvature_numeric(
    model: &EconomyModel,
    point: &ManifoldPoint,
    cfg: &FdConfig,
) -> Result<RiemannTensor> {
    cfg.validate()?;
    require_margin(model, point.t(), 3.0 * cfg.step_h)?;
    let l = model.goods();
    let flat = dispatch(model, point, cfg, riemann_flat::<f64>, riemann_flat::<Dd>)?;
    Ok(RiemannTensor::from_flat(l, flat))
}

fn require_margin(model: &EconomyModel, t: f64, margin: f64) -> Result<()> {
    let (t0, t1) = model.domain();
    if t < t0 + margin || t > t1 - margin {
        return Err(Error::Domain { t, t_min: t0 + margin, t_max: t1 - margin });
    }
    Ok(())
}

/// Runs a flat-tensor kernel in double-double when the family supports it,
/// otherwise in f64 (custom economies).
fn dispatch(
    model: &EconomyModel,
    point: &ManifoldPoint,
    cfg: &FdConfig,
    kernel_f64: impl Fn(&EconomyModel, &[f64], &FdConfig) -> Result<Vec<f64>>,
    kernel_dd: impl Fn(&EconomyModel, &[Dd], &FdConfig) -> Result<Vec<Dd>>,
) -> Result<Vec<f64>> {
    let mut coords = vec![point.t()];
    coords.extend(point.alpha().iter());
    if model.supports_extended() {
        let x: Vec<Dd> = coords.iter().map(|&v| Dd::from_f64(v)).collect();
        Ok(kernel_dd(model, &x, cfg)?.into_iter().map(Dd::to_f64).collect())
    } else {
        kernel_f64(model, &coords, cfg)
    }
}

/// Central difference of a flat vector-valued map along coordinate `dir`,
/// with optional one-level Richardson extrapolation.
fn diff_flat<S: Field>(
    eval: &mut dyn FnMut(&[S]) -> Result<Vec<S>>,
    x: &[S],
    dir: usize,
    h: f64,
    richardson: bool,
) -> Result<Vec<S>> {
    let mut central = |step: f64| -> Result<Vec<S>> {
        let s = S::from_f64(step);
        let two_step = S::from_f64(2.0 * step);
        let mut xp = x.to_vec();
        xp[dir] = xp[dir] + s;
        let mut xm = x.to_vec();
        xm[dir] = xm[dir] - s;
        let fp = eval(&xp)?;
        let fm = eval(&xm)?;
        Ok(fp.into_iter().zip(fm).map(|(a, b)| (a - b) / two_step).collect())
    };
    if richardson {
        let d1 = central(h)?;
        let d2 = central(h / 2.0)?;
        let third = S::from_f64(3.0);
        let four = S::from_f64(4.0);
        Ok(d2.into_iter().zip(d1).map(|(fine, coarse)| (four * fine - coarse) / third).collect())
    } else {
        central(h)
    }
}

fn embed_coords<S: Field>(model: &EconomyModel, x: &[S]) -> Result<Vec<S>> {
    S::embed_model(model, x[0], &x[1..])
}

/// Flat `L x L` induced metric at coordinates `x`.
fn metric_flat<S: Field>(model: &EconomyModel, x: &[S], cfg: &FdConfig) -> Result<Vec<S>> {
    let l = model.goods();
    let mut eval = |y: &[S]| embed_coords(model, y);
    let mut columns = Vec::with_capacity(l);
    for dir in 0..l {
        columns.push(diff_flat(&mut eval, x, dir, cfg.step_h, cfg.richardson)?);
    }
    let mut g = Vec::with_capacity(l * l);
    for i in 0..l {
        for j in 0..l {
            let mut acc = S::from_f64(0.0);
            for r in 0..2 * l - 1 {
                acc = acc + columns[i][r] * columns[j][r];
            }
            g.push(acc);
        }
    }
    Ok(g)
}

/// Gauss-Jordan inverse with partial pivoting; small dense systems only.
fn invert_flat<S: Field>(g: &[S], l: usize) -> Result<Vec<S>> {
    let mut a: Vec<Vec<S>> = (0..l).map(|i| g[i * l..(i + 1) * l].to_vec()).collect();
    let mut inv: Vec<Vec<S>> = (0..l)
        .map(|i| (0..l).map(|j| S::from_f64(if i == j { 1.0 } else { 0.0 })).collect())
        .collect();
    for col in 0..l {
        let pivot = (col..l)
            .max_by(|&r1, &r2| {
                let v1 = a[r1][col].to_f64().abs();
                let v2 = a[r2][col].to_f64().abs();
                v1.partial_cmp(&v2).unwrap()
            })
            .unwrap();
        if a[pivot][col].to_f64().abs() < 1e-300 {
            return Err(Error::SingularMetric { det_g: 0.0, t: f64::NAN });
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        for j in 0..l {
            a[col][j] = a[col][j] / d;
            inv[col][j] = inv[col][j] / d;
        }
        for r in 0..l {
            if r == col {
                continue;
            }
            let f = a[r][col];
            for j in 0..l {
                a[r][j] = a[r][j] - f * a[col][j];
                inv[r][j] = inv[r][j] - f * inv[col][j];
            }
        }
    }
    Ok(inv.into_iter().flatten().collect())
}

/// Flat `L^3` Christoffel tensor (layout `[k][i][j]`) at coordinates `x`.
fn christoffel_flat<S: Field>(model: &EconomyModel, x: &[S], cfg: &FdConfig) -> Result<Vec<S>> {
    let l = model.goods();
    let mut eval = |y: &[S]| metric_flat(model, y, cfg);
    let mut dg = Vec::with_capacity(l);
    for dir in 0..l {
        dg.push(diff_flat(&mut eval, x, dir, cfg.step_h, cfg.richardson)?);
    }
    let g = metric_flat(model, x, cfg)?;
    let ginv = invert_flat(&g, l)?;
    let half = S::from_f64(0.5);
    let mut gamma = vec![S::from_f64(0.0); l * l * l];
    for k in 0..l {
        for i in 0..l {
            for j in 0..l {
                let mut acc = S::from_f64(0.0);
                for h in 0..l {
                    let term = dg[i][j * l + h] + dg[j][h * l + i] - dg[h][i * l + j];
                    acc = acc + ginv[h * l + k] * term;
                }
                gamma[(k * l + i) * l + j] = half * acc;
            }
        }
    }
    Ok(gamma)
}

/// Flat `L^4` curvature tensor (layout `[s][i][j][k]`) at coordinates `x`.
fn riemann_flat<S: Field>(model: &EconomyModel, x: &[S], cfg: &FdConfig) -> Result<Vec<S>> {
    let l = model.goods();
    let mut eval = |y: &[S]| christoffel_flat(model, y, cfg);
    let mut dgam = Vec::with_capacity(l);
    for dir in 0..l {
        dgam.push(diff_flat(&mut eval, x, dir, cfg.step_h, cfg.richardson)?);
    }
    let gamma = christoffel_flat(model, x, cfg)?;
    let gam = |k: usize, i: usize, j: usize| gamma[(k * l + i) * l + j];
    let mut r = vec![S::from_f64(0.0); l * l * l * l];
    for s in 0..l {
        for i in 0..l {
            for j in 0..l {
                for k in 0..l {
                    let mut acc = S::from_f64(0.0);
                    for m in 0..l {
                        acc = acc + gam(m, i, k) * gam(s, j, m);
                        acc = acc - gam(m, j, k) * gam(s, i, m);
                    }
                    acc = acc + dgam[j][(s * l + i) * l + k] - dgam[i][(s * l + j) * l + k];
                    r[((s * l + i) * l + j) * l + k] = acc;
                }
            }
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economy::CustomEconomy;
    use crate::geometry::{christoffel_at, curvature_at, metric_at};
    use std::sync::Arc;

    fn tanh_sin3() -> EconomyModel {
        EconomyModel::tanh_sin(3, 0.5, 0.3, 1.0, 0.0).unwrap()
    }

    #[test]
    fn config_bounds_are_enforced() {
        let m = tanh_sin3();
        let pt = m.embed(0.0, &[0.0, 0.0]).unwrap();
        let cfg = FdConfig { step_h: 1e-9, richardson: true };
        assert!(matches!(metric_numeric(&m, &pt, &cfg), Err(Error::Validation(_))));
    }

    #[test]
    fn boundary_margin_is_enforced() {
        let m = tanh_sin3();
        let pt = m.embed(2.999999, &[0.0, 0.0]).unwrap();
        assert!(matches!(
            metric_numeric(&m, &pt, &FdConfig::default()),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn metric_constant_economy_is_exact() {
        let m = EconomyModel::constant(3, 1.0, 1.0).unwrap();
        let pt = m.embed(0.7, &[0.3, -0.4]).unwrap();
        let num = metric_numeric(&m, &pt, &FdConfig::default()).unwrap();
        let closed = metric_at(&m, &pt).unwrap();
        assert!((num - closed.g).abs().max() < 1e-10);
    }

    #[test]
    fn metric_tanh_sin_g00_at_origin() {
        let m = tanh_sin3();
        let pt = m.embed(0.0, &[0.0, 0.0]).unwrap();
        let num = metric_numeric(&m, &pt, &FdConfig::default()).unwrap();
        assert!((num[(0, 0)] - 1.34).abs() < 1e-8);
    }

    #[test]
    fn christoffel_constant_economy_is_flat() {
        let m = EconomyModel::constant(3, 1.0, 1.0).unwrap();
        let pt = m.embed(-1.2, &[0.8, 0.1]).unwrap();
        let ch = christoffel_numeric(&m, &pt, &FdConfig::default()).unwrap();
        for k in 0..3 {
            assert!(ch.upper(k).abs().max() < 1e-8);
        }
    }

    #[test]
    fn christoffel_matches_closed_form() {
        let m = tanh_sin3();
        let pt = m.embed(0.0, &[0.0, 0.0]).unwrap();
        let num = christoffel_numeric(&m, &pt, &FdConfig::default()).unwrap();
        let closed = christoffel_at(&m, &pt).unwrap();
        for k in 0..3 {
            assert!((num.upper(k) - closed.upper(k)).abs().max() < 1e-6);
        }
        // entries with both lower indices nonzero reproduce the vanishing
        for k in 0..3 {
            for i in 1..3 {
                for j in 1..3 {
                    assert!(num.get(k, i, j).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn richardson_reduces_christoffel_error_tenfold() {
        let m = tanh_sin3();
        let pt = m.embed(0.45, &[0.2, -0.3]).unwrap();
        let closed = christoffel_at(&m, &pt).unwrap();
        let err = |rich: bool| -> f64 {
            let cfg = FdConfig { step_h: 1e-5, richardson: rich };
            let num = christoffel_numeric(&m, &pt, &cfg).unwrap();
            (0..3).map(|k| (num.upper(k) - closed.upper(k)).abs().max()).fold(0.0, f64::max)
        };
        let plain = err(false);
        let extrapolated = err(true);
        assert!(
            extrapolated * 10.0 <= plain,
            "richardson {extrapolated:e} vs plain {plain:e}"
        );
    }

    #[test]
    fn curvature_constant_economy_vanishes() {
        let m = EconomyModel::constant(3, 1.0, 1.0).unwrap();
        let pt = m.embed(0.3, &[0.5, 0.5]).unwrap();
        let r = curvature_numeric(&m, &pt, &FdConfig::default()).unwrap();
        for s in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        assert!(r.get(s, i, j, k).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn curvature_contraction_matches_closed_form() {
        let m = tanh_sin3();
        let pt = m.embed(0.0, &[0.0, 0.0]).unwrap();
        let r = curvature_numeric(&m, &pt, &FdConfig::default()).unwrap();
        let g = metric_at(&m, &pt).unwrap().g;
        let cr = curvature_at(&m, &pt).unwrap();
        for i in 1..3 {
            let contr = r.inner(&g, 0, i, 0, i);
            let want = cr.inner_r[i - 1];
            assert!(
                (contr - want).abs() < 1e-4 * want.abs() + 1e-8,
                "i={i}: {contr} vs {want}"
            );
        }
        // antisymmetry in the first index pair
        for s in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        assert!((r.get(s, i, j, k) + r.get(s, j, i, k)).abs() < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn custom_economy_uses_f64_fallback() {
        let fns = CustomEconomy {
            price: Arc::new(|t: f64| vec![1.0 + 0.1 * t * t, 2.0]),
            price_d1: Arc::new(|t: f64| vec![0.2 * t, 0.0]),
            price_d2: Arc::new(|_| vec![0.2, 0.0]),
            income: Arc::new(|t: f64| t),
            income_d1: Arc::new(|_| 1.0),
            income_d2: Arc::new(|_| 0.0),
        };
        let m = EconomyModel::custom(3, [-2.0, 2.0], fns).unwrap();
        let pt = m.embed(0.5, &[0.1, 0.2]).unwrap();
        let num = metric_numeric(&m, &pt, &FdConfig::default()).unwrap();
        let closed = metric_at(&m, &pt).unwrap();
        assert!((num - closed.g).abs().max() < 1e-6);
        let ch_num = christoffel_numeric(&m, &pt, &FdConfig::default()).unwrap();
        let ch = christoffel_at(&m, &pt).unwrap();
        for k in 0..3 {
            assert!((ch_num.upper(k) - ch.upper(k)).abs().max() < 1e-5);
        }
    }

    #[test]
    fn basis_fields_match_numeric_jacobian() {
        let m = tanh_sin3();
        let pt = m.embed(0.8, &[0.4, -0.2]).unwrap();
        let basis = m.basis_fields(&pt).unwrap();
        let h = 1e-6;
        let mut coords = vec![pt.t()];
        coords.extend(pt.alpha().iter());
        for col in 0..3 {
            let mut xp = coords.clone();
            xp[col] += h;
            let mut xm = coords.clone();
            xm[col] -= h;
            let fp = m.embed(xp[0], &xp[1..]).unwrap();
            let fm = m.embed(xm[0], &xm[1..]).unwrap();
            for row in 0..5 {
                let fd = (fp.ambient()[row] - fm.ambient()[row]) / (2.0 * h);
                let scale = basis[(row, col)].abs().max(1.0);
                assert!(
                    (basis[(row, col)] - fd).abs() / scale < 1e-6,
                    "J[{row},{col}]: {} vs {fd}",
                    basis[(row, col)]
                );
            }
        }
    }
}
