//! Double-double arithmetic (about 106 significand bits) for the
//! finite-difference oracle.
//!
//! A central difference at `h = 1e-6` divides the rounding noise of two error
//! evaluations by `2h`; in plain `f64` that noise is around `1e-10` and swamps
//! small gradient entries. Evaluating the error in double-double pushes it
//! below `1e-20`.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::activations::Activation;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Dd = Dd {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

const PI: Dd = Dd {
    hi: std::f64::consts::PI,
    lo: 1.224_646_799_147_353_2e-16,
};

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

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    #[inline]
    pub fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    /// Multiplies by `2^k` exactly.
    fn ldexp(self, k: i32) -> Self {
        let f = 2f64.powi(k);
        Dd { hi: self.hi * f, lo: self.lo * f }
    }

    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        let s = Dd::new(self.hi.sqrt());
        s + (self - s * s) / (s + s)
    }

    pub fn exp(self) -> Self {
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2 * Dd::new(k)).ldexp(-10);
        // |r| < 3.4e-4: 12 terms are far below double-double resolution
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        for n in 1..=12 {
            term = term * r / Dd::new(n as f64);
            sum = sum + term;
        }
        for _ in 0..10 {
            sum = sum * sum;
        }
        sum.ldexp(k as i32)
    }

    pub fn tanh(self) -> Self {
        let t = (Dd::new(-2.0) * self.abs()).exp();
        let v = (Dd::ONE - t) / (Dd::ONE + t);
        if self.hi < 0.0 {
            -v
        } else {
            v
        }
    }

    pub fn logistic(self) -> Self {
        if self.hi >= 0.0 {
            Dd::ONE / (Dd::ONE + (-self).exp())
        } else {
            let e = self.exp();
            e / (Dd::ONE + e)
        }
    }

    pub fn atan(self) -> Self {
        // atan(x) = 2 atan(x / (1 + sqrt(1 + x^2)))
        let mut x = self;
        let mut doublings = 0;
        while x.hi.abs() > 0.03 {
            x = x / (Dd::ONE + (Dd::ONE + x * x).sqrt());
            doublings += 1;
        }
        let x2 = x * x;
        let mut power = x;
        let mut sum = x;
        for n in 1..=12 {
            power = -(power * x2);
            sum = sum + power / Dd::new((2 * n + 1) as f64);
        }
        sum.ldexp(doublings)
    }

    pub fn activate(self, activation: Activation) -> Self {
        match activation {
            Activation::Tanh => self.tanh(),
            Activation::Logistic => self.logistic(),
            Activation::ScaledArctan => Dd::new(2.0) * self.atan() / PI,
            Activation::Identity => self,
        }
    }
}

impl Neg for Dd {
    type Output = Dd;
    #[inline]
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Add for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, b: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, b.hi);
        let (t1, t2) = two_sum(self.lo, b.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        let (hi, lo) = quick_two_sum(s1, s2 + t2);
        Dd { hi, lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b * Dd::new(q1);
        let q2 = r.hi / b.hi;
        let r = r - b * Dd::new(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::new(q3)
    }
}

#[cfg(test)]
#[allow(clippy::approx_constant)]
mod tests {
    use super::*;

    fn close(a: Dd, hi: f64, lo: f64, tol: f64) {
        let err = ((a.hi - hi) + (a.lo - lo)).abs();
        assert!(err <= tol * hi.abs().max(1e-300), "{a:?} vs ({hi}, {lo}): {err:e}");
    }

    // references from a 40-digit evaluation, split into hi + lo
    #[test]
    fn transcendental_values() {
        close(Dd::new(1.0).exp(), 2.718_281_828_459_045, 1.445_646_891_729_250_2e-16, 1e-28);
        close(Dd::new(1.7).tanh(), 0.935_409_070_603_099, 6.160_665_782_786_146e-18, 1e-28);
        close(Dd::new(1.0).atan(), 0.785_398_163_397_448_3, 3.061_616_997_868_383e-17, 1e-28);
        close(Dd::new(2.0).sqrt(), std::f64::consts::SQRT_2, -9.667_293_313_452_913e-17, 1e-28);
    }

    #[test]
    fn identities() {
        for &x in &[-7.3, -1.2, -0.01, 0.0, 1e-5, 0.4, 2.5, 9.0] {
            let d = Dd::new(x);
            let t = d.tanh();
            // tanh(x) = 2 sigma(2x) - 1
            let via_logistic = Dd::new(2.0) * (Dd::new(2.0) * d).logistic() - Dd::ONE;
            assert!((t - via_logistic).to_f64().abs() < 1e-28, "{x}");
            // atan(x) + atan(1/x) = pi/2 for x > 0
            if x > 0.0 {
                let s = d.atan() + (Dd::ONE / d).atan();
                assert!((s - PI.ldexp(-1)).to_f64().abs() < 1e-28, "{x}");
            }
            assert!((t.to_f64() - x.tanh()).abs() <= 2.0 * f64::EPSILON);
            assert!((d.exp().to_f64() - x.exp()).abs() <= 2.0 * f64::EPSILON * x.exp());
        }
    }
}
