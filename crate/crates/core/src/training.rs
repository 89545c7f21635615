//! Full-batch training loop with per-step convergence records.

use crate::activations::Activation;
use crate::convergence::{first_order_predictor, IterationRecord};
use crate::error::{Error, Result};
use crate::gradients::{evaluate_batch, BatchEvaluation};
use crate::network::ForwardTrace;
use crate::optimizer::{OptimizerState, UpdateRule};
use crate::params::WeightSet;
use crate::topology::DagTopology;

/// Early stopping: the gradient norm stays below `threshold` for `window`
/// consecutive iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStop {
    pub threshold: f64,
    pub window: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub eta: f64,
    pub s: f64,
    pub rule: UpdateRule,
    /// Maximum number of optimizer steps.
    pub iterations: usize,
    pub early_stop: Option<EarlyStop>,
}

impl TrainOptions {
    pub fn adaptive(eta: f64, s: f64, iterations: usize) -> Self {
        Self {
            eta,
            s,
            rule: UpdateRule::Adaptive,
            iterations,
            early_stop: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: WeightSet,
    /// One record per optimizer step.
    pub trajectory: Vec<IterationRecord>,
    pub stopped_early: bool,
    /// Error at the final weights.
    pub final_error: f64,
}

fn output_increments(
    num_layers: usize,
    before: &[ForwardTrace],
    after: &[ForwardTrace],
) -> Vec<f64> {
    let mut per_layer = vec![0.0; num_layers];
    for (a, b) in before.iter().zip(after) {
        for (n, acc) in per_layer.iter_mut().enumerate() {
            *acc += a.out[n]
                .iter()
                .zip(&b.out[n])
                .map(|(x, y)| (y - x) * (y - x))
                .sum::<f64>();
        }
    }
    per_layer
}

/// Trains `weights` on `(inputs, targets)` and records every step.
///
/// `on_step` sees each record as soon as it is complete.
pub fn train_with(
    topology: &DagTopology,
    mut weights: WeightSet,
    activation: Activation,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    options: &TrainOptions,
    mut on_step: impl FnMut(&IterationRecord),
) -> Result<TrainOutcome> {
    if options.iterations == 0 {
        return Err(Error::Config("iteration budget must be at least 1".into()));
    }
    let mut optimizer = OptimizerState::with_rule(topology, options.eta, options.s, options.rule)?;
    let mut current: BatchEvaluation = evaluate_batch(topology, &weights, activation, inputs, targets)?;
    let mut trajectory = Vec::with_capacity(options.iterations);
    let mut below = 0usize;
    let mut stopped_early = false;

    for k in 0..options.iterations {
        let max_abs_weight = weights.max_abs();
        let edge_q_sq: Vec<f64> = current.gradients.per_edge.matrices().iter().map(|m| m.norm_sq()).collect();
        let sum_q_sq: f64 = edge_q_sq.iter().sum();

        let delta = optimizer.step(&mut weights, &current.gradients)?.clone();
        debug_assert!(delta.matches(topology), "increment edge set drifted from the topology");
        let predicted = first_order_predictor(&current.gradients, &delta)?;
        let edge_dv_sq: Vec<f64> = delta.matrices().iter().map(|m| m.norm_sq()).collect();

        let next = evaluate_batch(topology, &weights, activation, inputs, targets)?;
        let layer_dh_sq = output_increments(topology.num_layers(), &current.traces, &next.traces);

        let record = IterationRecord {
            k,
            error: current.error,
            sum_q_sq,
            edge_q_sq,
            sum_dv_sq: edge_dv_sq.iter().sum(),
            edge_dv_sq,
            sum_dh_sq: layer_dh_sq.iter().sum(),
            layer_dh_sq,
            predicted,
            delta_error: Some(next.error - current.error),
            max_abs_weight,
        };
        on_step(&record);
        trajectory.push(record);
        current = next;

        if let Some(stop) = options.early_stop {
            if current.gradients.norm_sq().sqrt() < stop.threshold {
                below += 1;
                if below >= stop.window {
                    stopped_early = true;
                    break;
                }
            } else {
                below = 0;
            }
        }
    }

    Ok(TrainOutcome {
        weights,
        trajectory,
        stopped_early,
        final_error: current.error,
    })
}

pub fn train(
    topology: &DagTopology,
    weights: WeightSet,
    activation: Activation,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    train_with(topology, weights, activation, inputs, targets, options, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convergence::check_descent_inequality;

    #[test]
    fn single_step_budget() {
        let t = DagTopology::dense(&[2, 3, 1]).unwrap();
        let w = WeightSet::filled(&t, 0.2);
        let inputs = vec![vec![0.5, -0.5], vec![1.0, 0.25]];
        let targets = vec![vec![0.3], vec![-0.2]];
        let out = train(&t, w.clone(), Activation::Tanh, &inputs, &targets, &TrainOptions::adaptive(0.05, 0.5, 1)).unwrap();
        assert_eq!(out.trajectory.len(), 1);
        let r = &out.trajectory[0];
        // pure gradient step: Q = -eta sum ||q||^2
        assert!((r.predicted + 0.05 * r.sum_q_sq).abs() < 1e-15);
        assert!((r.sum_dv_sq - 0.05 * 0.05 * r.sum_q_sq).abs() < 1e-15);
        assert!(check_descent_inequality(r, 0.05, 0.5));
        assert_eq!(r.layer_dh_sq[0], 0.0);
        assert!(r.sum_dh_sq > 0.0);
        assert!(train(&t, w, Activation::Tanh, &inputs, &targets, &TrainOptions::adaptive(0.05, 0.5, 0)).is_err());
    }

    #[test]
    fn early_stop_at_critical_point() {
        let t = DagTopology::sequential(&[1, 1]).unwrap();
        let w = WeightSet::zeros(&t);
        let opts = TrainOptions {
            early_stop: Some(EarlyStop { threshold: 1e-4, window: 10 }),
            ..TrainOptions::adaptive(0.1, 0.5, 100)
        };
        // zero weights, zero target: gradient vanishes identically
        let out = train(&t, w, Activation::Tanh, &[vec![1.0]], &[vec![0.0]], &opts).unwrap();
        assert!(out.stopped_early);
        assert_eq!(out.trajectory.len(), 10);
        assert!(out.trajectory.iter().all(|r| r.sum_q_sq == 0.0 && r.delta_error == Some(0.0)));
    }
}
