//! Reverse-mode gradients of the total error with respect to every edge matrix.
//!
//! For one sample with residual loss `||d - y||^2 / 2` the adjoints are
//!
//! ```text
//! delta_L = g'(S_L) * (y - d)
//! delta_j = g'(S_j) * sum_{(j,n)} v_(j,n) delta_n      1 <= j < L
//! q_(i,j) = H_i delta_j^T
//! ```
//!
//! evaluated in strictly descending layer order, so every `delta_n` with
//! `n > j` is final before `delta_j` is formed. Batch gradients are sums over
//! samples in the fixed shape described in [`crate::reduce`].
//!
//! [`finite_difference_gradients`] is an independent central-difference
//! oracle that only evaluates the forward recursion, in extended precision.

use crate::activations::Activation;
use crate::dd::Dd;
use crate::error::{Error, Result};
use crate::network::{batch_error, check_batch, forward, sample_error, ForwardTrace};
use crate::params::{EdgeMatrices, WeightSet};
use crate::reduce;
use crate::topology::DagTopology;

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-6;
/// Absolute floor of the relative-error denominator.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-10;

/// Per-edge gradient matrices `q_(i,j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub per_edge: EdgeMatrices,
    /// Per-layer adjoints `delta_j` of the single-sample pass that produced
    /// this set; empty for batch sums and finite-difference estimates.
    pub adjoints: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn zeros(topology: &DagTopology) -> Self {
        Self {
            per_edge: EdgeMatrices::zeros(topology),
            adjoints: Vec::new(),
        }
    }

    /// Sum of squared Frobenius norms over edges.
    pub fn norm_sq(&self) -> f64 {
        gradient_norm_sq(self)
    }
}

/// `sum_(i,j) ||q_(i,j)||^2`.
pub fn gradient_norm_sq(g: &GradientSet) -> f64 {
    g.per_edge.norm_sq()
}

fn check_trace(topology: &DagTopology, trace: &ForwardTrace) -> Result<()> {
    if trace.out.len() != topology.num_layers() || trace.pre.len() != topology.num_layers() {
        return Err(Error::TraceMismatch(format!(
            "trace has {} layers, topology has {}",
            trace.out.len(),
            topology.num_layers()
        )));
    }
    for (j, &w) in topology.widths().iter().enumerate() {
        let pre_len = if j == 0 { 0 } else { w };
        if trace.out[j].len() != w || trace.pre[j].len() != pre_len {
            return Err(Error::TraceMismatch(format!(
                "layer {j} has width {w} but the trace stores {} outputs",
                trace.out[j].len()
            )));
        }
    }
    Ok(())
}

/// Adjoints `delta_j` for one sample. Entry 0 is left empty.
fn adjoints(
    topology: &DagTopology,
    weights: &WeightSet,
    activation: Activation,
    trace: &ForwardTrace,
    target: &[f64],
) -> Vec<Vec<f64>> {
    let last = topology.output_layer();
    let mut delta: Vec<Vec<f64>> = vec![Vec::new(); topology.num_layers()];
    delta[last] = trace.pre[last]
        .iter()
        .zip(trace.output())
        .zip(target)
        .map(|((&s, &y), &d)| activation.eval_derivative(s) * (y - d))
        .collect();
    for j in (1..last).rev() {
        let mut back = vec![0.0; topology.width(j)];
        for &idx in topology.outgoing(j) {
            let to = topology.edges()[idx].to;
            weights.matrix(idx).accumulate_mul_vec(&delta[to], &mut back);
        }
        for (b, &s) in back.iter_mut().zip(&trace.pre[j]) {
            *b *= activation.eval_derivative(s);
        }
        delta[j] = back;
    }
    delta
}

/// Adds this sample's `H_i delta_j^T` into `acc` for every edge.
fn accumulate_outer(
    topology: &DagTopology,
    trace: &ForwardTrace,
    delta: &[Vec<f64>],
    acc: &mut EdgeMatrices,
) {
    for (idx, e) in topology.edges().iter().enumerate() {
        acc.matrix_mut(idx).add_outer(&trace.out[e.from], &delta[e.to]);
    }
}

/// Single-sample gradient from a forward trace and its target.
pub fn backward(
    topology: &DagTopology,
    weights: &WeightSet,
    activation: Activation,
    trace: &ForwardTrace,
    target: &[f64],
) -> Result<GradientSet> {
    weights.check_against(topology, "weights and topology")?;
    check_trace(topology, trace)?;
    if target.len() != topology.output_width() {
        return Err(Error::DimensionMismatch {
            what: "target vector",
            expected: topology.output_width(),
            found: target.len(),
        });
    }
    let delta = adjoints(topology, weights, activation, trace, target);
    let mut per_edge = EdgeMatrices::zeros(topology);
    accumulate_outer(topology, trace, &delta, &mut per_edge);
    Ok(GradientSet {
        per_edge,
        adjoints: delta,
    })
}

/// Sums single-sample gradient sets in the fixed block/tree shape. Each block
/// starts from zero and adds its samples in order.
pub fn sum_gradients(topology: &DagTopology, samples: &[GradientSet]) -> GradientSet {
    let partials: Vec<EdgeMatrices> = samples
        .chunks(reduce::BLOCK)
        .map(|block| {
            let mut acc = EdgeMatrices::zeros(topology);
            for g in block {
                acc.add_scaled(1.0, &g.per_edge).expect("same topology");
            }
            acc
        })
        .collect();
    let per_edge = reduce::pairwise(partials, &mut |a, b| {
        a.add_scaled(1.0, &b).expect("same topology");
    })
    .unwrap_or_else(|| EdgeMatrices::zeros(topology));
    GradientSet {
        per_edge,
        adjoints: Vec::new(),
    }
}

/// Everything one full-batch pass produces.
#[derive(Debug, Clone)]
pub struct BatchEvaluation {
    /// Total error `E`.
    pub error: f64,
    pub gradients: GradientSet,
    /// One forward trace per sample, in input order.
    pub traces: Vec<ForwardTrace>,
}

/// Forward and backward over the whole batch. The error equals
/// [`batch_error`] and the gradient equals [`sum_gradients`] over per-sample
/// [`backward`] results, both bit for bit.
pub fn evaluate_batch(
    topology: &DagTopology,
    weights: &WeightSet,
    activation: Activation,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<BatchEvaluation> {
    weights.check_against(topology, "weights and topology")?;
    check_batch(topology, inputs, targets)?;
    let mut traces = Vec::with_capacity(inputs.len());
    let mut errors = Vec::with_capacity(inputs.len());
    let mut partials = Vec::with_capacity(inputs.len().div_ceil(reduce::BLOCK));
    for (xs, ds) in inputs.chunks(reduce::BLOCK).zip(targets.chunks(reduce::BLOCK)) {
        let mut acc = EdgeMatrices::zeros(topology);
        for (x, d) in xs.iter().zip(ds) {
            let trace = forward(topology, weights, activation, x)?;
            errors.push(sample_error(trace.output(), d));
            let delta = adjoints(topology, weights, activation, &trace, d);
            // acc + a*b equals acc + (0 + a*b) up to the sign of zero
            accumulate_outer(topology, &trace, &delta, &mut acc);
            traces.push(trace);
        }
        partials.push(acc);
    }
    let per_edge = reduce::pairwise(partials, &mut |a, b| {
        a.add_scaled(1.0, &b).expect("same topology");
    })
    .expect("non-empty batch");
    if !per_edge.is_finite() {
        return Err(Error::NonFiniteValue {
            layer: topology.output_layer(),
        });
    }
    Ok(BatchEvaluation {
        error: reduce::sum(&errors),
        gradients: GradientSet {
            per_edge,
            adjoints: Vec::new(),
        },
        traces,
    })
}

/// Central differences `(E(v + h e) - E(v - h e)) / 2h` for every weight entry.
/// Total error in double-double precision with one weight entry replaced.
fn extended_batch_error(
    topology: &DagTopology,
    weights: &WeightSet,
    activation: Activation,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    probe: (usize, usize, Dd),
) -> Dd {
    let (probe_edge, probe_entry, probe_value) = probe;
    let mut total = Dd::ZERO;
    for (x, d) in inputs.iter().zip(targets) {
        let mut out: Vec<Vec<Dd>> = vec![Vec::new(); topology.num_layers()];
        out[0] = x.iter().map(|&v| Dd::new(v)).collect();
        for layer in 1..topology.num_layers() {
            let mut s = vec![Dd::ZERO; topology.width(layer)];
            for &idx in topology.incoming(layer) {
                let m = weights.matrix(idx);
                let from = &out[topology.edges()[idx].from];
                for (r, &h) in from.iter().enumerate() {
                    for (c, acc) in s.iter_mut().enumerate() {
                        let entry = r * m.cols() + c;
                        let v = if idx == probe_edge && entry == probe_entry {
                            probe_value
                        } else {
                            Dd::new(m.as_slice()[entry])
                        };
                        *acc = *acc + h * v;
                    }
                }
            }
            out[layer] = s.into_iter().map(|v| v.activate(activation)).collect();
        }
        for (&y, &t) in out[topology.output_layer()].iter().zip(d) {
            let r = Dd::new(t) - y;
            total = total + Dd::new(0.5) * r * r;
        }
    }
    total
}

/// Central differences `(E(v + h e) - E(v - h e)) / 2h` for every weight entry.
///
/// Both error evaluations and the perturbed weight are carried in
/// double-double precision, so the result is limited by the `O(h^2)`
/// truncation term rather than by cancellation.
pub fn finite_difference_gradients(
    topology: &DagTopology,
    weights: &WeightSet,
    activation: Activation,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    h: f64,
) -> Result<GradientSet> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::DomainError(format!("finite-difference step {h} must be positive")));
    }
    // validates shapes and finiteness once
    batch_error(topology, weights, activation, inputs, targets)?;
    let step = Dd::new(h);
    let mut per_edge = EdgeMatrices::zeros(topology);
    for idx in 0..topology.edges().len() {
        for entry in 0..weights.matrix(idx).len() {
            let v = Dd::new(weights.matrix(idx).as_slice()[entry]);
            let plus = extended_batch_error(topology, weights, activation, inputs, targets, (idx, entry, v + step));
            let minus = extended_batch_error(topology, weights, activation, inputs, targets, (idx, entry, v - step));
            per_edge.matrix_mut(idx).as_mut_slice()[entry] = ((plus - minus) / (Dd::new(2.0) * step)).to_f64();
        }
    }
    Ok(GradientSet {
        per_edge,
        adjoints: Vec::new(),
    })
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Largest entrywise [`relative_error`] between two gradient sets.
pub fn max_relative_error(a: &GradientSet, b: &GradientSet, floor: f64) -> Result<f64> {
    a.per_edge.check_keys(&b.per_edge, "gradient sets")?;
    Ok(a
        .per_edge
        .matrices()
        .iter()
        .zip(b.per_edge.matrices())
        .flat_map(|(x, y)| x.as_slice().iter().zip(y.as_slice()))
        .map(|(&x, &y)| relative_error(x, y, floor))
        .fold(0.0, f64::max))
}
