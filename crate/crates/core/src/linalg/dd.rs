//! Double-double arithmetic: an unevaluated sum `hi + lo` carrying roughly
//! 106 bits of significand, and the [`Real`] trait that lets reference
//! computations run in either precision.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar field used by the reference (oracle) forward passes.
pub trait Real:
    Copy + PartialOrd + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn sigmoid(self) -> Self {
        Self::one() / (Self::one() + (-self).exp())
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn tanh(self) -> Self {
        super::tanh(self)
    }
    fn sigmoid(self) -> Self {
        super::sigmoid(self)
    }
}

/// `hi + lo` with `|lo| ≤ ulp(hi)/2`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Dd {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

const LN2: Dd = Dd {
    hi: 6.931_471_805_599_453e-1,
    lo: 2.319_046_813_846_299_6e-17,
};

/// Halvings applied before the Taylor series of `exp`.
const EXP_HALVINGS: i32 = 10;

impl Dd {
    pub const fn new(hi: f64, lo: f64) -> Self {
        Self { hi, lo }
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    fn scale_pow2(self, k: i32) -> Self {
        let s = 2f64.powi(k);
        Self::new(self.hi * s, self.lo * s)
    }

    fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    /// `exp(r) − 1` for `|r| ≲ ln 2 / 2`.
    fn expm1_reduced(r: Dd) -> Dd {
        let r = r.scale_pow2(-EXP_HALVINGS);
        let mut term = r;
        let mut sum = r;
        for n in 2..=20 {
            term = term * r / Dd::from(n as f64);
            sum = sum + term;
            if term.hi.abs() < 1e-36 * sum.hi.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        // e^{2a} − 1 = (e^a − 1)(e^a − 1 + 2)
        for _ in 0..EXP_HALVINGS {
            sum = sum * (sum + Dd::from(2.0));
        }
        sum
    }

    pub fn exp_m1(self) -> Dd {
        if self.hi.abs() < 0.34 {
            Self::expm1_reduced(self)
        } else {
            self.exp() - Dd::from(1.0)
        }
    }
}

impl From<f64> for Dd {
    fn from(v: f64) -> Self {
        Self::new(v, 0.0)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd::new(-self.hi, -self.lo)
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        if !s.is_finite() {
            return Dd::from(s);
        }
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd::new(hi, lo)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        if !p.is_finite() {
            return Dd::from(p);
        }
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd::new(hi, lo)
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        if !q1.is_finite() {
            return Dd::from(q1);
        }
        let r = self - o * Dd::from(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::from(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd::new(hi, lo) + Dd::from(q3)
    }
}

impl Real for Dd {
    fn from_f64(v: f64) -> Self {
        Dd::from(v)
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn exp(self) -> Dd {
        if self.hi > 709.0 {
            return Dd::from(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Dd::from(0.0);
        }
        let k = (self.hi / LN2.hi).round();
        let r = self - LN2 * Dd::from(k);
        (Dd::expm1_reduced(r) + Dd::from(1.0)).scale_pow2(k as i32)
    }

    fn ln(self) -> Dd {
        if !(self.hi > 0.0) {
            return Dd::from(f64::NAN);
        }
        let mut y = Dd::from(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - Dd::from(1.0);
        }
        y
    }

    fn tanh(self) -> Dd {
        let a = self.abs();
        if a.hi > 40.0 {
            return Dd::from(self.hi.signum());
        }
        // tanh a = −m / (2 + m) with m = e^{−2a} − 1
        let m = (-(a + a)).exp_m1();
        let t = -m / (Dd::from(2.0) + m);
        if self.hi < 0.0 {
            -t
        } else {
            t
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `(function, x, hi, lo)` with `hi + lo` the 50-digit reference value.
    const CASES: [(&str, f64, f64, f64); 10] = [
        ("exp", 0.5, 1.6487212707001282, -4.731568479435833e-17),
        ("exp", -10.25, 3.535750085040998e-05, 1.323159849324113e-21),
        ("exp", 3.75, 42.52108200006278, -3.2371687033598516e-16),
        ("ln", 2.0, 0.6931471805599453, 2.3190468138462996e-17),
        ("ln", 0.3, -1.2039728043259361, 8.935521583403776e-17),
        ("tanh", 0.3, 0.2913126124515909, -6.4602656586469586e-18),
        ("tanh", -2.5, -0.9866142981514303, 2.4529238788172874e-17),
        ("tanh", 1e-06, 9.999999999996666e-07, -2.5868588632771325e-23),
        ("sigmoid", -1.75, 0.14804719803168948, -5.63314932917493e-18),
        ("expm1", 1e-07, 1.0000000500000016e-07, 2.9454139437880323e-24),
    ];

    #[test]
    fn transcendentals_reach_double_double_accuracy() {
        for (f, x, hi, lo) in CASES {
            let x = Dd::from(x);
            let got = match f {
                "exp" => x.exp(),
                "ln" => x.ln(),
                "tanh" => x.tanh(),
                "sigmoid" => x.sigmoid(),
                "expm1" => x.exp_m1(),
                _ => unreachable!(),
            };
            let err = (got - Dd::new(hi, lo)).to_f64().abs();
            assert!(err <= 1e-30 * hi.abs(), "{f}({}) off by {err:e}", x.hi);
        }
    }

    #[test]
    fn arithmetic_is_exact_where_expected() {
        let third = Dd::from(1.0) / Dd::from(3.0);
        let back = third * Dd::from(3.0) - Dd::from(1.0);
        assert!(back.to_f64().abs() < 1e-31);
        // θ ± ε is exact in double-double even when it is not in fp64.
        let theta = Dd::from(0.1);
        let eps = Dd::from(1e-5);
        let diff = (theta + eps) - (theta - eps);
        assert_eq!(diff.to_f64(), 2e-5);
    }

    #[test]
    fn f64_impl_uses_clamped_activations() {
        assert!(Real::tanh(50.0f64) < 1.0);
        assert!(Real::sigmoid(-1e4f64) > 0.0);
    }
}
