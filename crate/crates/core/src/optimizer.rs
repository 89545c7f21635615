//! Gradient descent with adaptive momentum.
//!
//! Per edge `(i, j)`:
//!
//! ```text
//! dv^{k+1} = c^k dv^k - eta q^k
//! c^k      = tau ||q^k|| / ||dv^k||   if ||dv^k|| != 0, else 0
//! tau      = s eta,  0 < s < 1
//! ```
//!
//! with Frobenius norms taken over the whole edge matrix, so the momentum term
//! always has magnitude `tau ||q^k||`.

use crate::error::{Error, Result};
use crate::gradients::GradientSet;
use crate::matrix::Matrix;
use crate::params::{EdgeMatrices, WeightSet};
use crate::topology::DagTopology;

/// How the previous increment enters the next one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateRule {
    /// The data-dependent coefficient `tau ||q|| / ||dv||`.
    Adaptive,
    /// Classical constant-coefficient momentum, for labelled baseline runs only.
    Fixed { momentum: f64 },
}

/// Learning rate, momentum ratio, previous increments and iteration count.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    eta: f64,
    s: f64,
    rule: UpdateRule,
    prev_delta: EdgeMatrices,
    k: usize,
}

/// Momentum coefficient for one edge.
pub fn momentum_coefficient(tau: f64, q: &Matrix, prev_delta: &Matrix) -> f64 {
    let prev_norm = prev_delta.norm();
    if prev_norm != 0.0 {
        tau * q.norm() / prev_norm
    } else {
        0.0
    }
}

/// Largest admissible learning rate `(1 - s) / (C (s^2 + 1))` for a given
/// constant `C`. Learning rates must be strictly below it.
pub fn max_eta(s: f64, c: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::DomainError(format!("momentum ratio s = {s} must lie in (0, 1)")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::DomainError(format!("constant C = {c} must be positive and finite")));
    }
    Ok((1.0 - s) / (c * (s * s + 1.0)))
}

impl OptimizerState {
    pub fn new(topology: &DagTopology, eta: f64, s: f64) -> Result<Self> {
        Self::with_rule(topology, eta, s, UpdateRule::Adaptive)
    }

    pub fn with_rule(topology: &DagTopology, eta: f64, s: f64, rule: UpdateRule) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::DomainError(format!("learning rate {eta} must be positive")));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::DomainError(format!("momentum ratio s = {s} must lie in (0, 1)")));
        }
        if let UpdateRule::Fixed { momentum } = rule {
            if !(0.0..1.0).contains(&momentum) {
                return Err(Error::DomainError(format!("fixed momentum {momentum} must lie in [0, 1)")));
            }
        }
        Ok(Self {
            eta,
            s,
            rule,
            prev_delta: EdgeMatrices::zeros(topology),
            k: 0,
        })
    }

    /// State continuing from a previous increment `dv^k` after `k` steps.
    pub fn resume(
        topology: &DagTopology,
        eta: f64,
        s: f64,
        rule: UpdateRule,
        prev_delta: EdgeMatrices,
        k: usize,
    ) -> Result<Self> {
        let mut state = Self::with_rule(topology, eta, s, rule)?;
        prev_delta.check_against(topology, "increments and topology")?;
        state.prev_delta = prev_delta;
        state.k = k;
        Ok(state)
    }

    #[inline]
    pub fn eta(&self) -> f64 {
        self.eta
    }

    #[inline]
    pub fn s(&self) -> f64 {
        self.s
    }

    /// Base momentum `tau = s eta`.
    #[inline]
    pub fn tau(&self) -> f64 {
        self.s * self.eta
    }

    #[inline]
    pub fn rule(&self) -> UpdateRule {
        self.rule
    }

    /// Number of steps taken so far.
    #[inline]
    pub fn iteration(&self) -> usize {
        self.k
    }

    /// The most recent increment `dv^k` (all zero before the first step).
    #[inline]
    pub fn prev_delta(&self) -> &EdgeMatrices {
        &self.prev_delta
    }

    /// Coefficient applied to each edge's previous increment for gradient `g`.
    pub fn coefficients(&self, g: &GradientSet) -> Vec<f64> {
        let tau = self.tau();
        g.per_edge
            .matrices()
            .iter()
            .zip(self.prev_delta.matrices())
            .map(|(q, dv)| match self.rule {
                UpdateRule::Adaptive => momentum_coefficient(tau, q, dv),
                UpdateRule::Fixed { momentum } => momentum,
            })
            .collect()
    }

    /// Applies one update to `weights` and returns the increment `dv^{k+1}`.
    /// Nothing is modified if any increment would be non-finite.
    pub fn step(&mut self, weights: &mut WeightSet, g: &GradientSet) -> Result<&EdgeMatrices> {
        weights.check_keys(&self.prev_delta, "weights and optimizer state")?;
        g.per_edge.check_keys(&self.prev_delta, "gradients and optimizer state")?;
        let coefficients = self.coefficients(g);
        let mut next = self.prev_delta.clone();
        for (idx, c) in coefficients.into_iter().enumerate() {
            let q = g.per_edge.matrix(idx);
            let dv = next.matrix_mut(idx);
            for (d, &qv) in dv.as_mut_slice().iter_mut().zip(q.as_slice()) {
                *d = c * *d - self.eta * qv;
            }
            if !dv.is_finite() {
                let e = weights.edges()[idx];
                return Err(Error::NonFiniteUpdate { from: e.from, to: e.to });
            }
        }
        weights.add_scaled(1.0, &next)?;
        self.prev_delta = next;
        self.k += 1;
        Ok(&self.prev_delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_topology() -> DagTopology {
        DagTopology::sequential(&[1, 1]).unwrap()
    }

    fn grad(t: &DagTopology, value: f64) -> GradientSet {
        GradientSet {
            per_edge: EdgeMatrices::filled(t, value),
            adjoints: Vec::new(),
        }
    }

    #[test]
    fn coefficient_branches() {
        let q = Matrix::from_vec(1, 2, vec![3.0, 4.0]);
        assert_eq!(momentum_coefficient(0.01, &q, &Matrix::zeros(1, 2)), 0.0);
        let same = Matrix::from_vec(1, 2, vec![-4.0, 3.0]);
        assert_eq!(momentum_coefficient(0.3, &q, &same), 0.3);
        let dv = Matrix::from_vec(1, 2, vec![0.0, 2.0]);
        assert!((momentum_coefficient(0.01, &q, &dv) - 0.025).abs() < 1e-17);
    }

    #[test]
    fn first_step_is_plain_gradient_descent() {
        let t = DagTopology::dense(&[2, 2, 1]).unwrap();
        let mut w = WeightSet::filled(&t, 0.5);
        let g = GradientSet {
            per_edge: EdgeMatrices::from_fn(&t, |e, r, c| (e.from + e.to + r + c) as f64 - 1.5),
            adjoints: Vec::new(),
        };
        let mut opt = OptimizerState::new(&t, 0.1, 0.5).unwrap();
        let mut expected = w.clone();
        expected.add_scaled(-0.1, &g.per_edge).unwrap();
        opt.step(&mut w, &g).unwrap();
        assert_eq!(w, expected);
        assert_eq!(opt.iteration(), 1);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let t = scalar_topology();
        let mut w = WeightSet::filled(&t, 0.5);
        let mut opt = OptimizerState::new(&t, 0.1, 0.5).unwrap();
        opt.step(&mut w, &grad(&t, 1.0)).unwrap();
        let before = w.clone();
        let dv = opt.step(&mut w, &grad(&t, 0.0)).unwrap();
        assert_eq!(dv.norm_sq(), 0.0);
        assert_eq!(w, before);
    }

    #[test]
    fn scalar_momentum_step() {
        // eta 0.1, s 0.5: coefficient 0.05 * 2 / 1 = 0.1, dv = 0.1 * 1 - 0.1 * 2
        let t = scalar_topology();
        let mut w = WeightSet::filled(&t, 0.0);
        let prev = EdgeMatrices::filled(&t, 1.0);
        let mut opt = OptimizerState::resume(&t, 0.1, 0.5, UpdateRule::Adaptive, prev, 4).unwrap();
        let dv = opt.step(&mut w, &grad(&t, 2.0)).unwrap().matrix(0).get(0, 0);
        assert!((dv - (-0.1)).abs() < 1e-16);
    }

    #[test]
    fn max_eta_values() {
        assert!((max_eta(0.5, 10.0).unwrap() - 0.04).abs() < 1e-17);
        assert!((max_eta(0.9, 1.0).unwrap() - 0.055_248_618_784_530_39).abs() < 1e-15);
        assert_eq!(max_eta(0.3, 4.0).unwrap(), max_eta(0.3, 2.0).unwrap() / 2.0);
        assert!(max_eta(0.0, 10.0).is_err());
        assert!(max_eta(1.0, 10.0).is_err());
        assert!(max_eta(0.5, 0.0).is_err());
    }

    #[test]
    fn invalid_hyperparameters() {
        let t = scalar_topology();
        assert!(OptimizerState::new(&t, 0.0, 0.5).is_err());
        assert!(OptimizerState::new(&t, 0.1, 1.0).is_err());
        assert!(OptimizerState::with_rule(&t, 0.1, 0.5, UpdateRule::Fixed { momentum: 1.5 }).is_err());
    }

    #[test]
    fn non_finite_update_leaves_state_untouched() {
        let t = scalar_topology();
        let mut w = WeightSet::filled(&t, 0.5);
        let mut opt = OptimizerState::new(&t, 0.1, 0.5).unwrap();
        let before = (w.clone(), opt.clone());
        assert!(matches!(
            opt.step(&mut w, &grad(&t, f64::INFINITY)),
            Err(Error::NonFiniteUpdate { from: 0, to: 1 })
        ));
        assert_eq!((w, opt), before);
    }

    #[test]
    fn key_mismatch() {
        let t = scalar_topology();
        let other = DagTopology::sequential(&[1, 2]).unwrap();
        let mut w = WeightSet::filled(&t, 0.5);
        let mut opt = OptimizerState::new(&t, 0.1, 0.5).unwrap();
        assert!(matches!(opt.step(&mut w, &grad(&other, 1.0)), Err(Error::KeyMismatch(_))));
    }

    #[test]
    fn fixed_rule_uses_constant_coefficient() {
        let t = scalar_topology();
        let mut w = WeightSet::filled(&t, 0.0);
        let mut opt = OptimizerState::with_rule(&t, 0.1, 0.5, UpdateRule::Fixed { momentum: 0.9 }).unwrap();
        opt.step(&mut w, &grad(&t, 1.0)).unwrap();
        let dv = opt.step(&mut w, &grad(&t, 1.0)).unwrap().matrix(0).get(0, 0);
        assert!((dv - (0.9 * -0.1 - 0.1)).abs() < 1e-16);
    }
}
