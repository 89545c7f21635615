//! Scalar activation functions with analytic first and second derivatives.
//!
//! The convergence-checked activations are bounded together with their first
//! two derivatives on the whole real line. [`Activation::Identity`] is not and
//! is only reachable through [`Activation::parse_unchecked`]; it exists for
//! closed-form sanity checks on linear networks.

use std::f64::consts::{FRAC_2_PI, PI};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Logistic,
    /// `(2/pi) atan(s)`, with range `(-1, 1)`.
    ScaledArctan,
    Identity,
}

/// Suprema of `|g|`, `|g'|` and `|g''|` over the real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationBounds {
    pub value: f64,
    pub first: f64,
    pub second: f64,
}

impl Activation {
    pub const CHECKED: [Activation; 3] = [Self::Tanh, Self::Logistic, Self::ScaledArctan];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Tanh => "tanh",
            Self::Logistic => "logistic",
            Self::ScaledArctan => "scaled-arctan",
            Self::Identity => "identity",
        }
    }

    /// Whether `g`, `g'` and `g''` are all bounded.
    pub fn is_checked(&self) -> bool {
        !matches!(self, Self::Identity)
    }

    /// Parses any activation, including the unbounded identity.
    pub fn parse_unchecked(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "tanh" => Ok(Self::Tanh),
            "logistic" | "logistic-sigmoid" | "sigmoid" => Ok(Self::Logistic),
            "scaled-arctan" | "arctan" => Ok(Self::ScaledArctan),
            "identity" | "linear" => Ok(Self::Identity),
            other => Err(Error::UnknownActivation(other.to_string())),
        }
    }

    pub fn bounds(&self) -> Option<ActivationBounds> {
        let sqrt3 = 3f64.sqrt();
        match self {
            Self::Tanh => Some(ActivationBounds {
                value: 1.0,
                first: 1.0,
                second: 4.0 / (3.0 * sqrt3),
            }),
            Self::Logistic => Some(ActivationBounds {
                value: 1.0,
                first: 0.25,
                second: 1.0 / (6.0 * sqrt3),
            }),
            Self::ScaledArctan => Some(ActivationBounds {
                value: 1.0,
                first: FRAC_2_PI,
                second: 9.0 / (4.0 * PI * sqrt3),
            }),
            Self::Identity => None,
        }
    }

    #[inline]
    pub fn apply(&self, s: f64) -> Result<f64> {
        check_finite(s)?;
        Ok(self.eval(s))
    }

    #[inline]
    pub fn derivative(&self, s: f64) -> Result<f64> {
        check_finite(s)?;
        Ok(self.eval_derivative(s))
    }

    #[inline]
    pub fn second_derivative(&self, s: f64) -> Result<f64> {
        check_finite(s)?;
        Ok(self.eval_second_derivative(s))
    }

    /// `g(s)` without the finiteness check, for inner loops that validate separately.
    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Self::Tanh => s.tanh(),
            Self::Logistic => logistic(s),
            Self::ScaledArctan => FRAC_2_PI * s.atan(),
            Self::Identity => s,
        }
    }

    #[inline]
    pub fn eval_derivative(&self, s: f64) -> f64 {
        match self {
            // sech^2 avoids the cancellation in 1 - tanh^2 for large |s|
            Self::Tanh => {
                let c = s.cosh();
                1.0 / (c * c)
            }
            Self::Logistic => logistic(s) * logistic(-s),
            Self::ScaledArctan => FRAC_2_PI / (1.0 + s * s),
            Self::Identity => 1.0,
        }
    }

    #[inline]
    pub fn eval_second_derivative(&self, s: f64) -> f64 {
        match self {
            Self::Tanh => {
                let c = s.cosh();
                -2.0 * s.tanh() / (c * c)
            }
            // 1 - 2 sigma(s) = -tanh(s/2)
            Self::Logistic => -logistic(s) * logistic(-s) * (0.5 * s).tanh(),
            Self::ScaledArctan => {
                let d = 1.0 + s * s;
                -2.0 * FRAC_2_PI * s / (d * d)
            }
            Self::Identity => 0.0,
        }
    }
}

#[inline]
fn logistic(s: f64) -> f64 {
    1.0 / (1.0 + (-s).exp())
}

#[inline]
fn check_finite(s: f64) -> Result<()> {
    if s.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteInput(s))
    }
}

impl FromStr for Activation {
    type Err = Error;

    /// Parses a convergence-checked activation; the identity is refused.
    fn from_str(name: &str) -> Result<Self> {
        let a = Self::parse_unchecked(name)?;
        if a.is_checked() {
            Ok(a)
        } else {
            Err(Error::UncheckedActivation(a.name().to_string()))
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const H: f64 = 1e-5;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-10)
    }

    // Finite differences of g evaluated through the complement 1 - |g|, which
    // keeps the saturated tails from cancelling to nothing.
    fn fd_value(a: Activation, s: f64) -> f64 {
        let f = |x: f64| -> f64 {
            match a {
                Activation::Tanh => {
                    if s > 0.0 {
                        -2.0 / ((2.0 * x).exp() + 1.0)
                    } else {
                        2.0 / ((-2.0 * x).exp() + 1.0)
                    }
                }
                Activation::Logistic => {
                    if s > 0.0 {
                        -1.0 / (1.0 + x.exp())
                    } else {
                        1.0 / (1.0 + (-x).exp())
                    }
                }
                Activation::ScaledArctan => 2.0 / PI * x.atan(),
                Activation::Identity => x,
            }
        };
        (f(s + H) - f(s - H)) / (2.0 * H)
    }

    fn fd_derivative(a: Activation, s: f64) -> f64 {
        (a.eval_derivative(s + H) - a.eval_derivative(s - H)) / (2.0 * H)
    }

    #[test]
    fn tabulated_values() {
        assert_eq!(Activation::Tanh.apply(0.0).unwrap(), 0.0);
        assert_eq!(Activation::Logistic.apply(0.0).unwrap(), 0.5);
        // (e^2 - 1)/(e^2 + 1) to 16 digits
        assert!((Activation::Tanh.apply(1.0).unwrap() - 0.761_594_155_955_764_9).abs() < 1e-15);
        assert_eq!(Activation::Tanh.derivative(0.0).unwrap(), 1.0);
        assert_eq!(Activation::Logistic.derivative(0.0).unwrap(), 0.25);
        assert_eq!(Activation::Tanh.second_derivative(0.0).unwrap(), 0.0);
        assert_eq!(Activation::ScaledArctan.derivative(0.0).unwrap(), FRAC_2_PI);
    }

    #[test]
    fn tanh_range() {
        for s in [-30.0, -1.0, 0.3, 5.0] {
            let v = Activation::Tanh.apply(s).unwrap();
            assert!(v.abs() <= 1.0);
        }
        assert!(Activation::Tanh.apply(3.0).unwrap() < 1.0);
    }

    #[test]
    fn non_finite_rejected() {
        for a in Activation::CHECKED {
            assert!(matches!(a.apply(f64::NAN), Err(Error::NonFiniteInput(_))));
            assert!(a.derivative(f64::INFINITY).is_err());
            assert!(a.second_derivative(f64::NEG_INFINITY).is_err());
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for a in Activation::CHECKED {
            for _ in 0..1000 {
                let s: f64 = rng.gen_range(-10.0..10.0);
                let e1 = rel_err(a.eval_derivative(s), fd_value(a, s));
                assert!(e1 < 1e-6, "{a} g' at {s}: rel err {e1:e}");
                let e2 = rel_err(a.eval_second_derivative(s), fd_derivative(a, s));
                assert!(e2 < 1e-6, "{a} g'' at {s}: rel err {e2:e}");
            }
        }
    }

    #[test]
    fn bounds_hold_and_are_attained() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for a in Activation::CHECKED {
            let b = a.bounds().unwrap();
            for _ in 0..10_000 {
                let s: f64 = rng.gen_range(-50.0..50.0);
                assert!(a.eval(s).abs() <= b.value);
                assert!(a.eval_derivative(s).abs() <= b.first * (1.0 + 1e-15));
                assert!(a.eval_second_derivative(s).abs() <= b.second * (1.0 + 1e-12));
            }
        }
        // analytic extrema of |g''|
        let tanh_peak = (1.0 / 3f64.sqrt()).atanh();
        let b = Activation::Tanh.bounds().unwrap();
        assert!((Activation::Tanh.eval_second_derivative(tanh_peak).abs() - b.second).abs() < 1e-14);
        let logistic_peak = (2.0 + 3f64.sqrt()).ln();
        let b = Activation::Logistic.bounds().unwrap();
        assert!((Activation::Logistic.eval_second_derivative(logistic_peak).abs() - b.second).abs() < 1e-14);
        let arctan_peak = 1.0 / 3f64.sqrt();
        let b = Activation::ScaledArctan.bounds().unwrap();
        assert!((Activation::ScaledArctan.eval_second_derivative(arctan_peak).abs() - b.second).abs() < 1e-14);
        assert_eq!(Activation::Tanh.eval_derivative(0.0), b_first(Activation::Tanh));
    }

    fn b_first(a: Activation) -> f64 {
        a.bounds().unwrap().first
    }

    #[test]
    fn identity_is_unchecked() {
        assert!(matches!("identity".parse::<Activation>(), Err(Error::UncheckedActivation(_))));
        assert_eq!(Activation::parse_unchecked("linear").unwrap(), Activation::Identity);
        assert!(Activation::Identity.bounds().is_none());
        assert!(matches!("relu".parse::<Activation>(), Err(Error::UnknownActivation(_))));
        assert_eq!("logistic-sigmoid".parse::<Activation>().unwrap(), Activation::Logistic);
    }
}
