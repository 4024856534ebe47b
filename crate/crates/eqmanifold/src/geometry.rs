//! Closed-form geometry of the equilibrium manifold: induced metric, inverse
//! metric, Christoffel symbols and curvature coefficients, all evaluated from
//! the scalars `A, A', B, C, |p|^2` without any numerical differentiation.
//!
//! Every quotient in this module has denominator `det g = |p|^2 B + A^2`;
//! points where it degenerates are surfaced as [`Error::SingularMetric`],
//! never regularized.

use nalgebra::{DMatrix, DVector};

use crate::economy::{EconomyModel, ManifoldPoint, Scalars};
use crate::error::{Error, Result};

/// Determinant threshold below which the immersion is considered failed.
pub const SINGULAR_DET_TOL: f64 = 1e-14;

/// Threshold for a degenerate 2-plane in sectional-curvature denominators.
pub const DEGENERATE_PLANE_TOL: f64 = 1e-14;

/// Induced metric at a point: the matrix, its closed-form inverse, the
/// determinant `|p|^2 B + A^2` and the underlying scalars.
#[derive(Debug, Clone)]
pub struct MetricData {
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub det_g: f64,
    pub scalars: Scalars,
}

/// Christoffel symbols at a point, indexed `get(k, i, j)` = Gamma^k_ij.
#[derive(Debug, Clone)]
pub struct ChristoffelField {
    gamma: Vec<DMatrix<f64>>,
}

impl ChristoffelField {
    pub(crate) fn from_parts(gamma: Vec<DMatrix<f64>>) -> Self {
        ChristoffelField { gamma }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.gamma[k][(i, j)]
    }

    /// The matrix `Gamma^k_{..}` for a fixed upper index.
    pub fn upper(&self, k: usize) -> &DMatrix<f64> {
        &self.gamma[k]
    }
}

/// Coefficients `R^s_{ijk}` of the curvature tensor in the coordinate basis.
#[derive(Debug, Clone)]
pub struct RiemannTensor {
    dim: usize,
    data: Vec<f64>,
}

impl RiemannTensor {
    fn zeros(dim: usize) -> Self {
        RiemannTensor { dim, data: vec![0.0; dim * dim * dim * dim] }
    }

    /// `data` in `[s][i][j][k]` layout, row-major.
    pub(crate) fn from_flat(dim: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dim * dim * dim * dim);
        RiemannTensor { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn idx(&self, s: usize, i: usize, j: usize, k: usize) -> usize {
        ((s * self.dim + i) * self.dim + j) * self.dim + k
    }

    #[inline]
    pub fn get(&self, s: usize, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx(s, i, j, k)]
    }

    #[inline]
    fn set(&mut self, s: usize, i: usize, j: usize, k: usize, v: f64) {
        let n = self.idx(s, i, j, k);
        self.data[n] = v;
    }

    /// `<R(X_i, X_j) X_k, X_s> = sum_l R^l_{ijk} g_{ls}`.
    pub fn inner(&self, g: &DMatrix<f64>, i: usize, j: usize, k: usize, s: usize) -> f64 {
        (0..self.dim).map(|l| self.get(l, i, j, k) * g[(l, s)]).sum()
    }
}

/// Sectional-curvature summary at a point.
#[derive(Debug, Clone)]
pub struct CurvatureReport {
    /// `K(X_0, X_i)` for i = 1..L-1.
    pub sec_0i: DVector<f64>,
    /// max |K(X_i, X_j)| over i, j >= 1 (must vanish).
    pub sec_ij_max_abs: f64,
    /// `<R(X_0, X_i) X_0, X_i> = -(p_i')^2 B / det g`.
    pub inner_r: DVector<f64>,
}

/// Everything the closed forms need at one point.
pub(crate) struct PointData {
    pub l: usize,
    pub p: Vec<f64>,
    pub dp: Vec<f64>,
    pub ddp: Vec<f64>,
    pub s: Scalars,
    pub det: f64,
    /// `P = sum_l p_l p_l'`, the t-derivative of `|p|^2 / 2`.
    pub p_dot_dp: f64,
}

impl PointData {
    pub fn new(model: &EconomyModel, point: &ManifoldPoint) -> Result<Self> {
        Self::from_coords(model, point.t(), point.alpha().as_slice())
    }

    pub fn from_coords(model: &EconomyModel, t: f64, alpha: &[f64]) -> Result<Self> {
        model.check_domain(t)?;
        let point = model.embed(t, alpha)?;
        let s = model.scalars(&point)?;
        let p = model.price(t);
        let dp = model.price_d1(t);
        let ddp = model.price_d2(t);
        let det = s.norm_p_sq * s.b + s.a * s.a;
        if det <= SINGULAR_DET_TOL {
            return Err(Error::SingularMetric { det_g: det, t });
        }
        let p_dot_dp = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
        Ok(PointData { l: model.goods(), p, dp, ddp, s, det, p_dot_dp })
    }

    fn metric(&self) -> DMatrix<f64> {
        let l = self.l;
        let mut g = DMatrix::zeros(l, l);
        g[(0, 0)] = self.s.b + self.s.a * self.s.a;
        for i in 1..l {
            g[(0, i)] = -self.p[i - 1] * self.s.a;
            g[(i, 0)] = g[(0, i)];
            for j in 1..l {
                g[(i, j)] = if i == j {
                    1.0 + self.p[i - 1] * self.p[i - 1]
                } else {
                    self.p[i - 1] * self.p[j - 1]
                };
            }
        }
        g
    }

    fn metric_inverse(&self) -> DMatrix<f64> {
        let l = self.l;
        let (a, b, np2, det) = (self.s.a, self.s.b, self.s.norm_p_sq, self.det);
        let mut inv = DMatrix::zeros(l, l);
        inv[(0, 0)] = np2 / det;
        for i in 1..l {
            inv[(0, i)] = self.p[i - 1] * a / det;
            inv[(i, 0)] = inv[(0, i)];
            for j in 1..l {
                inv[(i, j)] = if i == j {
                    ((np2 - self.p[i - 1] * self.p[i - 1]) * b + a * a) / det
                } else {
                    -self.p[i - 1] * self.p[j - 1] * b / det
                };
            }
        }
        inv
    }

    fn christoffel(&self) -> ChristoffelField {
        let l = self.l;
        let Scalars { a, a_prime, b, c, norm_p_sq } = self.s;
        let det = self.det;
        let mut gamma = vec![DMatrix::zeros(l, l); l];
        gamma[0][(0, 0)] = (norm_p_sq * c + a * a_prime) / det;
        for k in 1..l {
            gamma[k][(0, 0)] = self.p[k - 1] * (a * c - a_prime * b) / det;
        }
        for j in 1..l {
            let g00j = -self.dp[j - 1] * a / det;
            gamma[0][(0, j)] = g00j;
            gamma[0][(j, 0)] = g00j;
            for k in 1..l {
                let gk0j = self.dp[j - 1] * self.p[k - 1] * b / det;
                gamma[k][(0, j)] = gk0j;
                gamma[k][(j, 0)] = gk0j;
            }
        }
        ChristoffelField { gamma }
    }

    /// `d Gamma^s_{ik} / d x_d`, differentiating the closed forms with the
    /// quotient rule over `det g`. The combination (i = k = 0, d = 0) would
    /// need third derivatives of the model; it cancels out of the curvature
    /// tensor (R^s_{iik} = 0) and must never be requested.
    fn dgamma(&self, s: usize, i: usize, k: usize, d: usize) -> f64 {
        if i != 0 && k != 0 {
            return 0.0;
        }
        let Scalars { a, a_prime, b, c, norm_p_sq } = self.s;
        let det = self.det;
        let ddet = if d == 0 {
            2.0 * (self.p_dot_dp * b + norm_p_sq * c + a * a_prime)
        } else {
            -2.0 * self.dp[d - 1] * a
        };
        let (num, dnum) = if i == 0 && k == 0 {
            debug_assert!(d != 0, "d/dx0 of Gamma^s_00 is never part of the tensor");
            let j = d - 1;
            if s == 0 {
                (norm_p_sq * c + a * a_prime, -self.dp[j] * a_prime - self.ddp[j] * a)
            } else {
                let m = s - 1;
                (
                    self.p[m] * (a * c - a_prime * b),
                    self.p[m] * (-self.dp[j] * c + self.ddp[j] * b),
                )
            }
        } else {
            // Gamma^s_{0j} family, j the nonzero lower index.
            let j = if i == 0 { k } else { i } - 1;
            if d == 0 {
                if s == 0 {
                    (-self.dp[j] * a, -self.ddp[j] * a - self.dp[j] * a_prime)
                } else {
                    let m = s - 1;
                    (
                        self.dp[j] * self.p[m] * b,
                        self.ddp[j] * self.p[m] * b
                            + self.dp[j] * self.dp[m] * b
                            + 2.0 * self.dp[j] * self.p[m] * c,
                    )
                }
            } else {
                let e = d - 1;
                if s == 0 {
                    (-self.dp[j] * a, self.dp[j] * self.dp[e])
                } else {
                    (self.dp[j] * self.p[s - 1] * b, 0.0)
                }
            }
        };
        (dnum * det - num * ddet) / (det * det)
    }

    fn riemann(&self) -> RiemannTensor {
        let l = self.l;
        let gamma = self.christoffel();
        let mut r = RiemannTensor::zeros(l);
        for i in 0..l {
            for j in 0..l {
                if i >= j {
                    continue;
                }
                for k in 0..l {
                    for s in 0..l {
                        let mut acc = 0.0;
                        for m in 0..l {
                            acc += gamma.get(m, i, k) * gamma.get(s, j, m);
                            acc -= gamma.get(m, j, k) * gamma.get(s, i, m);
                        }
                        acc += self.dgamma(s, i, k, j) - self.dgamma(s, j, k, i);
                        r.set(s, i, j, k, acc);
                        r.set(s, j, i, k, -acc);
                    }
                }
            }
        }
        r
    }
}

/// Evaluates the induced metric, its closed-form inverse and determinant.
pub fn metric_at(model: &EconomyModel, point: &ManifoldPoint) -> Result<MetricData> {
    let pd = PointData::new(model, point)?;
    Ok(MetricData { g: pd.metric(), g_inv: pd.metric_inverse(), det_g: pd.det, scalars: pd.s })
}

/// Evaluates the full Christoffel catalogue at a point. Entries with both
/// lower indices nonzero vanish identically.
pub fn christoffel_at(model: &EconomyModel, point: &ManifoldPoint) -> Result<ChristoffelField> {
    Ok(PointData::new(model, point)?.christoffel())
}

/// The full coefficient tensor `R^s_{ijk}`, antisymmetric in (i, j) by
/// construction, assembled from the closed-form Christoffels and their
/// analytic partial derivatives.
pub fn riemann_coefficients_at(model: &EconomyModel, point: &ManifoldPoint) -> Result<RiemannTensor> {
    Ok(PointData::new(model, point)?.riemann())
}

/// Sectional curvatures at a point: `K(X_0, X_i)` from the closed form and
/// `K(X_i, X_j)` from the generic coefficient tensor (these must vanish).
pub fn curvature_at(model: &EconomyModel, point: &ManifoldPoint) -> Result<CurvatureReport> {
    let pd = PointData::new(model, point)?;
    let l = pd.l;
    let g = pd.metric();
    let mut inner_r = DVector::zeros(l - 1);
    let mut sec_0i = DVector::zeros(l - 1);
    for i in 1..l {
        let inner = -pd.dp[i - 1] * pd.dp[i - 1] * pd.s.b / pd.det;
        let denom = g[(0, 0)] * g[(i, i)] - g[(0, i)] * g[(0, i)];
        if denom <= DEGENERATE_PLANE_TOL {
            return Err(Error::DegeneratePlane { value: denom, i: 0, j: i });
        }
        inner_r[i - 1] = inner;
        sec_0i[i - 1] = inner / denom;
    }
    let riemann = pd.riemann();
    let mut sec_ij_max_abs: f64 = 0.0;
    for i in 1..l {
        for j in i + 1..l {
            let num = riemann.inner(&g, i, j, i, j);
            let denom = g[(i, i)] * g[(j, j)] - g[(i, j)] * g[(i, j)];
            if denom <= DEGENERATE_PLANE_TOL {
                return Err(Error::DegeneratePlane { value: denom, i, j });
            }
            sec_ij_max_abs = sec_ij_max_abs.max((num / denom).abs());
        }
    }
    Ok(CurvatureReport { sec_0i, sec_ij_max_abs, inner_r })
}

/// Analytic partial derivatives of the metric, `out[d] = dg/dx_d`.
/// Used by the metric-compatibility check of the Levi-Civita connection.
pub fn metric_partials(model: &EconomyModel, point: &ManifoldPoint) -> Result<Vec<DMatrix<f64>>> {
    let pd = PointData::new(model, point)?;
    let l = pd.l;
    let Scalars { a, a_prime, c, .. } = pd.s;
    let mut out = Vec::with_capacity(l);
    for d in 0..l {
        let mut m = DMatrix::zeros(l, l);
        if d == 0 {
            m[(0, 0)] = 2.0 * c + 2.0 * a * a_prime;
            for i in 1..l {
                m[(0, i)] = -pd.dp[i - 1] * a - pd.p[i - 1] * a_prime;
                m[(i, 0)] = m[(0, i)];
                for j in 1..l {
                    m[(i, j)] = if i == j {
                        2.0 * pd.p[i - 1] * pd.dp[i - 1]
                    } else {
                        pd.dp[i - 1] * pd.p[j - 1] + pd.p[i - 1] * pd.dp[j - 1]
                    };
                }
            }
        } else {
            m[(0, 0)] = -2.0 * a * pd.dp[d - 1];
            for i in 1..l {
                m[(0, i)] = pd.p[i - 1] * pd.dp[d - 1];
                m[(i, 0)] = m[(0, i)];
            }
        }
        out.push(m);
    }
    Ok(out)
}

/// Geodesic acceleration `-Gamma^k_{ij} v^i v^j` straight from the closed
/// forms, without materializing the Christoffel matrices. Used in the
/// integrator's inner loop.
pub(crate) fn geodesic_accel(
    model: &EconomyModel,
    t: f64,
    alpha: &[f64],
    v: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let pd = PointData::from_coords(model, t, alpha)?;
    let Scalars { a, a_prime, b, c, norm_p_sq } = pd.s;
    let det = pd.det;
    let v0 = v[0];
    let s1: f64 = pd.dp.iter().zip(&v[1..]).map(|(d, vi)| d * vi).sum();
    out[0] = -((norm_p_sq * c + a * a_prime) * v0 * v0 - 2.0 * v0 * a * s1) / det;
    let common = (a * c - a_prime * b) * v0 * v0 + 2.0 * v0 * b * s1;
    for k in 1..pd.l {
        out[k] = -pd.p[k - 1] * common / det;
    }
    Ok(())
}
