//! Double-double arithmetic for the finite-difference oracle.
//!
//! Nested central differences amplify the noise floor of the layer below by
//! 1/h per level, so a metric -> Christoffel -> curvature cascade computed in
//! plain f64 is roundoff-dominated long before it is truncation-dominated.
//! Carrying the oracle pipeline in ~31 significant digits keeps every level in
//! the truncation regime the oracle tolerances assume.
//!
//! The representation is the classic unevaluated sum `hi + lo` with
//! |lo| <= ulp(hi)/2. Only the operations the oracle needs are implemented:
//! field arithmetic plus `exp`, `sin` and `tanh` for the shipped economy
//! families.

use std::cmp::Ordering;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Dd = Dd { hi: 0.693_147_180_559_945_3, lo: 2.319_046_813_846_299_6e-17 };
const FRAC_PI_2: Dd = Dd { hi: 1.570_796_326_794_896_6, lo: 6.123_233_995_736_766e-17 };

/// |a| must not be smaller than |b|.
#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

// Dekker splitting: exact products on plain SSE2, no fma required (baseline
// x86-64 lowers `mul_add` to a slow exact software routine).
const SPLIT: f64 = 134_217_729.0; // 2^27 + 1

#[inline]
fn split(a: f64) -> (f64, f64) {
    let t = SPLIT * a;
    let hi = t - (t - a);
    (hi, a - hi)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    let err = ((ah * bh - p) + ah * bl + al * bh) + al * bl;
    (p, err)
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    #[inline]
    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    fn renorm(hi: f64, lo: f64) -> Dd {
        let (s, e) = quick_two_sum(hi, lo);
        Dd { hi: s, lo: e }
    }

    pub fn abs(self) -> Dd {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) { -self } else { self }
    }

    /// Exact scaling by a power of two.
    fn ldexp(self, k: i32) -> Dd {
        let f = f64::powi(2.0, k);
        Dd { hi: self.hi * f, lo: self.lo * f }
    }

    pub fn exp(self) -> Dd {
        // e^x = 2^k e^r with r = x - k ln2, |r| <= ln2/2; Taylor on r.
        let k = (self.hi / LN2.hi).round();
        let r = self - LN2 * Dd::from_f64(k);
        let mut sum = Dd::ONE + r;
        let mut term = r;
        let mut n = 1.0;
        for _ in 0..40 {
            n += 1.0;
            term = term * r / Dd::from_f64(n);
            sum = sum + term;
            if term.hi.abs() <= 1e-35 * sum.hi.abs() {
                break;
            }
        }
        sum.ldexp(k as i32)
    }

    pub fn sin(self) -> Dd {
        // Reduce modulo pi/2; |t| stays small in this crate so k is tiny and
        // the reduction loses nothing.
        let k = (self.hi / FRAC_PI_2.hi).round();
        let r = self - FRAC_PI_2 * Dd::from_f64(k);
        let quadrant = (k as i64).rem_euclid(4);
        match quadrant {
            0 => sin_taylor(r),
            1 => cos_taylor(r),
            2 => -sin_taylor(r),
            _ => -cos_taylor(r),
        }
    }

    pub fn tanh(self) -> Dd {
        // tanh x = sign(x) * (1 - 2/(e^{2|x|} + 1)); no cancellation because
        // the subtraction is against an exactly representable 1.
        let neg = self.hi < 0.0;
        let a = self.abs();
        let e = (a + a).exp();
        let t = Dd::ONE - Dd::from_f64(2.0) / (e + Dd::ONE);
        if neg { -t } else { t }
    }
}

fn sin_taylor(r: Dd) -> Dd {
    let r2 = r * r;
    let mut term = r;
    let mut sum = r;
    let mut n = 1.0;
    // |r| <= pi/4, so ~20 terms reach 1e-35; the cap guards the zero case.
    for _ in 0..40 {
        term = -term * r2 / Dd::from_f64((n + 1.0) * (n + 2.0));
        n += 2.0;
        sum = sum + term;
        if term.hi.abs() <= 1e-35 * sum.hi.abs() {
            break;
        }
    }
    sum
}

fn cos_taylor(r: Dd) -> Dd {
    let r2 = r * r;
    let mut term = Dd::ONE;
    let mut sum = Dd::ONE;
    let mut n = 0.0;
    for _ in 0..40 {
        term = -term * r2 / Dd::from_f64((n + 1.0) * (n + 2.0));
        n += 2.0;
        sum = sum + term;
        if term.hi.abs() <= 1e-35 * sum.hi.abs() {
            break;
        }
    }
    sum
}

impl Add for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (tl, te) = two_sum(self.lo, o.lo);
        let (s2, e2) = quick_two_sum(s, e + tl);
        Dd::renorm(s2, e2 + te)
    }
}

impl Sub for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Neg for Dd {
    type Output = Dd;
    #[inline]
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Mul for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        Dd::renorm(p, e + self.hi * o.lo + self.lo * o.hi)
    }
}

impl Div for Dd {
    type Output = Dd;
    #[inline]
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::from_f64(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::from_f64(q2);
        let q3 = r.hi / o.hi;
        let (s, e) = quick_two_sum(q1, q2);
        Dd::renorm(s, e + q3)
    }
}

impl PartialOrd for Dd {
    fn partial_cmp(&self, o: &Dd) -> Option<Ordering> {
        match self.hi.partial_cmp(&o.hi) {
            Some(Ordering::Equal) => self.lo.partial_cmp(&o.lo),
            other => other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_dd(actual: Dd, hi: f64, lo: f64) {
        let expected = Dd { hi, lo };
        let diff = (actual - expected).abs().to_f64();
        assert!(
            diff < 1e-29,
            "dd mismatch: got ({:e}, {:e}), want ({hi:e}, {lo:e}), diff {diff:e}",
            actual.hi,
            actual.lo
        );
    }

    #[test]
    fn functions_at_zero() {
        assert_eq!(Dd::ZERO.sin().to_f64(), 0.0);
        assert_eq!(Dd::ZERO.tanh().to_f64(), 0.0);
        assert_eq!(Dd::ZERO.exp().to_f64(), 1.0);
    }

    #[test]
    fn arithmetic_keeps_extended_precision() {
        // (1 + 2^-60) - 1 == 2^-60 exactly in dd, unrepresentable in f64.
        let tiny = (-60.0f64).exp2();
        let x = Dd::ONE + Dd::from_f64(tiny);
        assert_eq!((x - Dd::ONE).to_f64(), tiny);

        // division round trip
        let a = Dd::from_f64(3.7) / Dd::from_f64(1.3);
        let back = a * Dd::from_f64(1.3);
        assert!((back - Dd::from_f64(3.7)).abs().to_f64() < 1e-31);
    }

    // Reference values computed with 50-digit arithmetic at the exact
    // binary64 argument.
    #[test]
    fn exp_matches_reference() {
        assert_dd(Dd::from_f64(0.3).exp(), 1.3498588075760032, -9.447314673432387e-17);
        assert_dd(Dd::from_f64(-5.0).exp(), 0.006737946999085467, 9.579094181215286e-20);
        assert_dd(Dd::from_f64(2.0).exp(), 7.38905609893065, -1.7971139497839148e-16);
        assert_dd(Dd::from_f64(-0.001).exp(), 0.999000499833375, -3.026024053145243e-17);
        let big = Dd::from_f64(6.4).exp();
        let want = Dd { hi: 601.8450378720822, lo: 4.0403801218065004e-14 };
        assert!((big - want).abs().to_f64() < 1e-26);
    }

    #[test]
    fn sin_matches_reference() {
        assert_dd(Dd::from_f64(0.7).sin(), 0.644217687237691, 2.8740567927338755e-18);
        assert_dd(Dd::from_f64(-1.3).sin(), -0.963558185417193, -1.8247650480909386e-17);
        assert_dd(Dd::from_f64(2.9).sin(), 0.23924932921398243, -1.1267666643498124e-17);
        assert_dd(Dd::from_f64(0.05).sin(), 0.04997916927067833, 7.505162869770577e-19);
        assert_dd(Dd::from_f64(-2.999).sin(), -0.14210992983147067, -1.3851649615341748e-18);
        assert_dd(Dd::from_f64(1.0).sin(), 0.8414709848078965, 1.776845092935536e-18);
        assert_dd(Dd::from_f64(3.1).sin(), 0.04158066243329049, -7.108355207879104e-19);
    }

    #[test]
    fn tanh_matches_reference() {
        assert_dd(Dd::from_f64(0.7).tanh(), 0.6043677771171635, -2.7916180015425346e-17);
        assert_dd(Dd::from_f64(-1.3).tanh(), -0.8617231593133063, -3.4082750348316456e-17);
        assert_dd(Dd::from_f64(2.9).tanh(), 0.9939631673505831, 5.218429969538943e-17);
        assert_dd(Dd::from_f64(0.05).tanh(), 0.04995837495787998, -1.5963630612562948e-18);
        assert_dd(Dd::from_f64(-2.999).tanh(), -0.9950448778258346, -1.7318337786826288e-17);
        assert_dd(Dd::from_f64(1.0).tanh(), 0.7615941559557649, 3.7090214482164924e-17);
        assert_dd(Dd::from_f64(6.2).tanh(), 0.9999917628565104, -3.4140931982674155e-17);
    }
}
