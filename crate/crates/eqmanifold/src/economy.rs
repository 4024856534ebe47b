//! Economy models: smooth parametrizations of the price-income equilibria and
//! the embedding of the equilibrium manifold for two consumers.
//!
//! An economy is a smooth curve `t -> (p(t), w(t))` with `p(t)` the first
//! `L-1` normalized prices (good `L` is numeraire) and `w(t)` consumer 1's
//! income. The manifold point over `(t, alpha)` embeds into `R^{2L-1}` as
//!
//! ```text
//! (p_1(t), ..., p_{L-1}(t), alpha_1, ..., alpha_{L-1}, w(t) - sum_i p_i(t) alpha_i)
//! ```
//!
//! Derivatives are supplied analytically per family; the finite-difference
//! oracle must never feed on differentiated closed forms.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dd::Dd;
use crate::error::{Error, Result};

/// Number of points on the certification grid used by model validation.
pub const VALIDATION_GRID: usize = 512;

const DEFAULT_DOMAIN: [f64; 2] = [-3.0, 3.0];

/// Names accepted in the `family` field of an economy config.
pub const VALID_FAMILIES: [&str; 3] = ["constant", "tanh-sin", "fold"];

/// Scalar abstraction so family evaluation can run in f64 or double-double.
pub(crate) trait Field:
    Copy
    + PartialOrd
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn tanh(self) -> Self;
    fn sin(self) -> Self;
    /// Embedding evaluation in this scalar type (f64 covers custom economies,
    /// Dd only the built-in families).
    fn embed_model(model: &EconomyModel, t: Self, alpha: &[Self]) -> Result<Vec<Self>>;
}

impl Field for f64 {
    fn from_f64(x: f64) -> f64 {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn tanh(self) -> f64 {
        f64::tanh(self)
    }
    fn sin(self) -> f64 {
        f64::sin(self)
    }
    fn embed_model(model: &EconomyModel, t: f64, alpha: &[f64]) -> Result<Vec<f64>> {
        model.embed_f64(t, alpha)
    }
}

impl Field for Dd {
    fn from_f64(x: f64) -> Dd {
        Dd::from_f64(x)
    }
    fn to_f64(self) -> f64 {
        Dd::to_f64(self)
    }
    fn tanh(self) -> Dd {
        Dd::tanh(self)
    }
    fn sin(self) -> Dd {
        Dd::sin(self)
    }
    fn embed_model(model: &EconomyModel, t: Dd, alpha: &[Dd]) -> Result<Vec<Dd>> {
        model.embed_dd(t, alpha)
    }
}

/// User-supplied economy: all four derivative maps are mandatory because the
/// closed-form geometry consumes exact `p'`, `p''`, `w'`, `w''`.
pub struct CustomEconomy {
    pub price: Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
    pub price_d1: Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
    pub price_d2: Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
    pub income: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub income_d1: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub income_d2: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl Clone for CustomEconomy {
    fn clone(&self) -> Self {
        CustomEconomy {
            price: self.price.clone(),
            price_d1: self.price_d1.clone(),
            price_d2: self.price_d2.clone(),
            income: self.income.clone(),
            income_d1: self.income_d1.clone(),
            income_d2: self.income_d2.clone(),
        }
    }
}

impl fmt::Debug for CustomEconomy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomEconomy {{ .. }}")
    }
}

#[derive(Debug, Clone)]
enum Family {
    /// `p_i = p` constant, `w = c t`. Flat manifold, unique equilibrium.
    Constant { price: f64, slope: f64 },
    /// Odd components `1 + (a/m) tanh t`, even components `1 + (b/m) sin t`
    /// with `m = ceil(i/2)`; `w = c t + d sin t`. Generic curved case; the
    /// damping keeps higher components distinct for L > 3.
    TanhSin { a: f64, b: f64, c: f64, d: f64 },
    /// `p_1 = 1 + a tanh t`, remaining prices 1, `w = t - k tanh t` with
    /// k > 1. The fiber equation has three roots near the origin.
    Fold { a: f64, k: f64 },
    Custom(CustomEconomy),
}

impl Family {
    fn name(&self) -> &'static str {
        match self {
            Family::Constant { .. } => "constant",
            Family::TanhSin { .. } => "tanh-sin",
            Family::Fold { .. } => "fold",
            Family::Custom(_) => "custom",
        }
    }

    fn price_generic<S: Field>(&self, t: S, goods: usize) -> Vec<S> {
        let one = S::from_f64(1.0);
        match self {
            Family::Constant { price, .. } => vec![S::from_f64(*price); goods - 1],
            Family::TanhSin { a, b, .. } => (1..goods)
                .map(|i| {
                    if i % 2 == 1 {
                        let m = ((i + 1) / 2) as f64;
                        one + S::from_f64(a / m) * t.tanh()
                    } else {
                        let m = (i / 2) as f64;
                        one + S::from_f64(b / m) * t.sin()
                    }
                })
                .collect(),
            Family::Fold { a, .. } => {
                let mut p = vec![one; goods - 1];
                p[0] = one + S::from_f64(*a) * t.tanh();
                p
            }
            Family::Custom(_) => unreachable!("custom economies evaluate in f64 only"),
        }
    }

    fn income_generic<S: Field>(&self, t: S) -> S {
        match self {
            Family::Constant { slope, .. } => S::from_f64(*slope) * t,
            Family::TanhSin { c, d, .. } => S::from_f64(*c) * t + S::from_f64(*d) * t.sin(),
            Family::Fold { k, .. } => t - S::from_f64(*k) * t.tanh(),
            Family::Custom(_) => unreachable!("custom economies evaluate in f64 only"),
        }
    }
}

#[inline]
fn sech2(t: f64) -> f64 {
    let c = t.cosh();
    1.0 / (c * c)
}

/// A point of the equilibrium manifold: coordinates `(t, alpha)` together with
/// the cached ambient embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint {
    t: f64,
    alpha: DVector<f64>,
    ambient: DVector<f64>,
}

impl ManifoldPoint {
    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// The embedded image in `R^{2L-1}`.
    pub fn ambient(&self) -> &DVector<f64> {
        &self.ambient
    }

    /// Chart coordinates `(t, alpha_1, ..., alpha_{L-1})` as one vector.
    pub fn coords(&self) -> DVector<f64> {
        let mut c = DVector::zeros(self.alpha.len() + 1);
        c[0] = self.t;
        c.rows_mut(1, self.alpha.len()).copy_from(&self.alpha);
        c
    }

    /// Consumer 1's endowment `(alpha, omega_L)`: the last `L` ambient slots.
    pub fn endowment(&self) -> DVector<f64> {
        let l = self.alpha.len() + 1;
        self.ambient.rows(l - 1, l).into_owned()
    }
}

/// The scalar building blocks of every closed-form expression.
///
/// `a = w' - <p', alpha>`, `a_prime = w'' - <p'', alpha>`,
/// `b = |p'|^2`, `c = <p', p''>`, `norm_p_sq = 1 + |p|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scalars {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub c: f64,
    pub norm_p_sq: f64,
}

/// A smooth two-consumer exchange economy certified on a bounded t-interval.
#[derive(Debug, Clone)]
pub struct EconomyModel {
    goods: usize,
    domain: (f64, f64),
    family: Family,
}

impl EconomyModel {
    /// The `constant` family: `p_i = price`, `w = slope * t`.
    pub fn constant(goods: usize, price: f64, slope: f64) -> Result<Self> {
        Self::with_family(goods, DEFAULT_DOMAIN, Family::Constant { price, slope })
    }

    /// The `tanh-sin` family with defaults `a=0.5, b=0.3, c=1, d=0`.
    pub fn tanh_sin(goods: usize, a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        Self::with_family(goods, DEFAULT_DOMAIN, Family::TanhSin { a, b, c, d })
    }

    /// The `fold` family with defaults `a=0.5, k=2`; requires `k > 1`.
    pub fn fold(goods: usize, a: f64, k: f64) -> Result<Self> {
        if !(k > 1.0) {
            return Err(Error::Validation(format!(
                "fold family requires k > 1 (got k = {k}); otherwise the fiber equation is monotone"
            )));
        }
        Self::with_family(goods, DEFAULT_DOMAIN, Family::Fold { a, k })
    }

    /// A user-supplied economy; all derivative maps are mandatory.
    pub fn custom(goods: usize, domain: [f64; 2], fns: CustomEconomy) -> Result<Self> {
        Self::with_family(goods, domain, Family::Custom(fns))
    }

    /// Builds a model from a parsed config, then certifies it on the grid.
    pub fn from_config(cfg: &EconomyConfig) -> Result<Self> {
        let family = cfg.build_family()?;
        Self::with_family(cfg.goods, cfg.domain, family)
    }

    /// Parses the JSON economy config and builds the model.
    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: EconomyConfig = serde_json::from_str(json)?;
        Self::from_config(&cfg)
    }

    fn with_family(goods: usize, domain: [f64; 2], family: Family) -> Result<Self> {
        if goods < 2 {
            return Err(Error::Validation(format!("need at least 2 goods (got L = {goods})")));
        }
        if !(domain[0].is_finite() && domain[1].is_finite() && domain[0] < domain[1]) {
            return Err(Error::Validation(format!(
                "domain must be a finite interval [t_min, t_max] (got [{}, {}])",
                domain[0], domain[1]
            )));
        }
        let model = EconomyModel { goods, domain: (domain[0], domain[1]), family };
        model.certify()?;
        Ok(model)
    }

    /// Number of goods L (consumers are fixed at M = 2).
    pub fn goods(&self) -> usize {
        self.goods
    }

    /// Ambient dimension `2L - 1`.
    pub fn ambient_dim(&self) -> usize {
        2 * self.goods - 1
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn family_name(&self) -> &'static str {
        self.family.name()
    }

    /// Whether the family can be evaluated in extended precision (all
    /// built-in families; custom closures are f64 only).
    pub(crate) fn supports_extended(&self) -> bool {
        !matches!(self.family, Family::Custom(_))
    }

    pub fn check_domain(&self, t: f64) -> Result<()> {
        if !t.is_finite() || t < self.domain.0 || t > self.domain.1 {
            return Err(Error::Domain { t, t_min: self.domain.0, t_max: self.domain.1 });
        }
        Ok(())
    }

    /// Normalized prices `p(t)` (length L-1).
    pub fn price(&self, t: f64) -> Vec<f64> {
        match &self.family {
            Family::Custom(c) => (c.price)(t),
            f => f.price_generic(t, self.goods),
        }
    }

    pub fn price_d1(&self, t: f64) -> Vec<f64> {
        match &self.family {
            Family::Constant { .. } => vec![0.0; self.goods - 1],
            Family::TanhSin { a, b, .. } => (1..self.goods)
                .map(|i| {
                    if i % 2 == 1 {
                        a / (((i + 1) / 2) as f64) * sech2(t)
                    } else {
                        b / ((i / 2) as f64) * t.cos()
                    }
                })
                .collect(),
            Family::Fold { a, .. } => {
                let mut d = vec![0.0; self.goods - 1];
                d[0] = a * sech2(t);
                d
            }
            Family::Custom(c) => (c.price_d1)(t),
        }
    }

    pub fn price_d2(&self, t: f64) -> Vec<f64> {
        match &self.family {
            Family::Constant { .. } => vec![0.0; self.goods - 1],
            Family::TanhSin { a, b, .. } => (1..self.goods)
                .map(|i| {
                    if i % 2 == 1 {
                        -2.0 * a / (((i + 1) / 2) as f64) * sech2(t) * t.tanh()
                    } else {
                        -b / ((i / 2) as f64) * t.sin()
                    }
                })
                .collect(),
            Family::Fold { a, .. } => {
                let mut d = vec![0.0; self.goods - 1];
                d[0] = -2.0 * a * sech2(t) * t.tanh();
                d
            }
            Family::Custom(c) => (c.price_d2)(t),
        }
    }

    pub fn income(&self, t: f64) -> f64 {
        match &self.family {
            Family::Custom(c) => (c.income)(t),
            f => f.income_generic(t),
        }
    }

    pub fn income_d1(&self, t: f64) -> f64 {
        match &self.family {
            Family::Constant { slope, .. } => *slope,
            Family::TanhSin { c, d, .. } => c + d * t.cos(),
            Family::Fold { k, .. } => 1.0 - k * sech2(t),
            Family::Custom(c) => (c.income_d1)(t),
        }
    }

    pub fn income_d2(&self, t: f64) -> f64 {
        match &self.family {
            Family::Constant { .. } => 0.0,
            Family::TanhSin { d, .. } => -d * t.sin(),
            Family::Fold { k, .. } => 2.0 * k * sech2(t) * t.tanh(),
            Family::Custom(c) => (c.income_d2)(t),
        }
    }

    /// Embeds `(t, alpha)` into the ambient space.
    pub fn embed(&self, t: f64, alpha: &[f64]) -> Result<ManifoldPoint> {
        let ambient = self.embed_f64(t, alpha)?;
        Ok(ManifoldPoint {
            t,
            alpha: DVector::from_column_slice(alpha),
            ambient: DVector::from_vec(ambient),
        })
    }

    pub(crate) fn embed_f64(&self, t: f64, alpha: &[f64]) -> Result<Vec<f64>> {
        self.check_domain(t)?;
        if alpha.len() != self.goods - 1 {
            return Err(Error::Validation(format!(
                "alpha has length {} but L - 1 = {}",
                alpha.len(),
                self.goods - 1
            )));
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::Validation("alpha must be finite".into()));
        }
        let p = self.price(t);
        if let Some((i, &bad)) = p.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(Error::Validation(format!(
                "price p_{}({t}) = {bad} is not strictly positive",
                i + 1
            )));
        }
        let mut ambient = Vec::with_capacity(self.ambient_dim());
        ambient.extend_from_slice(&p);
        ambient.extend_from_slice(alpha);
        let spent: f64 = p.iter().zip(alpha).map(|(pi, ai)| pi * ai).sum();
        ambient.push(self.income(t) - spent);
        Ok(ambient)
    }

    /// Extended-precision embedding for the oracle; built-in families only.
    pub(crate) fn embed_dd(&self, t: Dd, alpha: &[Dd]) -> Result<Vec<Dd>> {
        self.check_domain(t.to_f64())?;
        let p = self.family.price_generic::<Dd>(t, self.goods);
        let mut ambient = Vec::with_capacity(self.ambient_dim());
        ambient.extend_from_slice(&p);
        ambient.extend_from_slice(alpha);
        let mut spent = Dd::ZERO;
        for (pi, ai) in p.iter().zip(alpha) {
            spent = spent + *pi * *ai;
        }
        ambient.push(self.family.income_generic::<Dd>(t) - spent);
        Ok(ambient)
    }

    /// The coordinate basis fields as columns of a `(2L-1) x L` matrix:
    /// column 0 is `(p', 0, A)`, column i has 1 in the alpha_i slot and
    /// `-p_i(t)` in the last slot.
    pub fn basis_fields(&self, point: &ManifoldPoint) -> Result<DMatrix<f64>> {
        self.check_domain(point.t)?;
        let l = self.goods;
        let p = self.price(point.t);
        let dp = self.price_d1(point.t);
        let s = self.scalars(point)?;
        let mut m = DMatrix::zeros(2 * l - 1, l);
        for r in 0..l - 1 {
            m[(r, 0)] = dp[r];
        }
        m[(2 * l - 2, 0)] = s.a;
        for i in 1..l {
            m[(l - 2 + i, i)] = 1.0;
            m[(2 * l - 2, i)] = -p[i - 1];
        }
        Ok(m)
    }

    /// Evaluates `A, A', B, C, |p|^2` at a point.
    pub fn scalars(&self, point: &ManifoldPoint) -> Result<Scalars> {
        self.check_domain(point.t)?;
        let p = self.price(point.t);
        let dp = self.price_d1(point.t);
        let ddp = self.price_d2(point.t);
        let alpha = &point.alpha;
        let dot = |v: &[f64]| -> f64 { v.iter().zip(alpha.iter()).map(|(x, a)| x * a).sum() };
        Ok(Scalars {
            a: self.income_d1(point.t) - dot(&dp),
            a_prime: self.income_d2(point.t) - dot(&ddp),
            b: dp.iter().map(|x| x * x).sum(),
            c: dp.iter().zip(&ddp).map(|(x, y)| x * y).sum(),
            norm_p_sq: 1.0 + p.iter().map(|x| x * x).sum::<f64>(),
        })
    }

    /// Certification sweep over the validation grid: positivity of prices,
    /// the immersion condition and injectivity of `t -> (p, w)`.
    fn certify(&self) -> Result<()> {
        let (t0, t1) = self.domain;
        let n = VALIDATION_GRID;
        let mut samples: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n);
        for k in 0..n {
            let t = t0 + (t1 - t0) * k as f64 / (n - 1) as f64;
            let p = self.price(t);
            if p.len() != self.goods - 1 {
                return Err(Error::Validation(format!(
                    "price map returned {} components, expected L - 1 = {}",
                    p.len(),
                    self.goods - 1
                )));
            }
            if let Some((i, &bad)) = p.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
                return Err(Error::Validation(format!(
                    "price p_{}({t}) = {bad} is not strictly positive on the validation grid",
                    i + 1
                )));
            }
            let dp = self.price_d1(t);
            let dw = self.income_d1(t);
            let speed_sq: f64 = dp.iter().map(|x| x * x).sum::<f64>() + dw * dw;
            if speed_sq < 1e-24 {
                return Err(Error::Validation(format!(
                    "immersion fails at t = {t}: (p'(t), w'(t)) vanishes"
                )));
            }
            samples.push((p, self.income(t)));
        }
        for i in 0..n {
            for j in i + 1..n {
                let (pi, wi) = &samples[i];
                let (pj, wj) = &samples[j];
                let dp = pi
                    .iter()
                    .zip(pj)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                if dp < 1e-9 && (wi - wj).abs() < 1e-9 {
                    return Err(Error::Validation(format!(
                        "phi is not injective on the validation grid: grid points {i} and {j} \
                         map to the same (p, w)"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn default_domain() -> [f64; 2] {
    DEFAULT_DOMAIN
}

/// JSON economy description:
/// `{"family": "tanh-sin", "L": 3, "params": {"a": 0.5}, "domain": [-3, 3]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EconomyConfig {
    pub family: String,
    #[serde(rename = "L")]
    pub goods: usize,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default = "default_domain")]
    pub domain: [f64; 2],
}

impl EconomyConfig {
    fn build_family(&self) -> Result<Family> {
        let get = |key: &str, default: f64| self.params.get(key).copied().unwrap_or(default);
        let allow = |keys: &[&str]| -> Result<()> {
            for k in self.params.keys() {
                if !keys.contains(&k.as_str()) {
                    return Err(Error::Validation(format!(
                        "unknown parameter '{k}' for family '{}' (accepted: {})",
                        self.family,
                        keys.join(", ")
                    )));
                }
            }
            Ok(())
        };
        match self.family.as_str() {
            "constant" => {
                allow(&["p", "c"])?;
                Ok(Family::Constant { price: get("p", 1.0), slope: get("c", 1.0) })
            }
            "tanh-sin" => {
                allow(&["a", "b", "c", "d"])?;
                Ok(Family::TanhSin {
                    a: get("a", 0.5),
                    b: get("b", 0.3),
                    c: get("c", 1.0),
                    d: get("d", 0.0),
                })
            }
            "fold" => {
                allow(&["a", "k"])?;
                let k = get("k", 2.0);
                if !(k > 1.0) {
                    return Err(Error::Validation(format!(
                        "fold family requires k > 1 (got k = {k})"
                    )));
                }
                Ok(Family::Fold { a: get("a", 0.5), k })
            }
            other => Err(Error::Validation(format!(
                "unknown family '{other}'; valid families: {}",
                VALID_FAMILIES.join(", ")
            ))),
        }
    }
}
