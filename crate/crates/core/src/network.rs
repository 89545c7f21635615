//! Forward propagation over a layered DAG.
//!
//! Layer `j` receives `S_j = sum_(i,j) H_i v_(i,j)` and outputs `H_j = g(S_j)`,
//! with `H_0 = x`. There are no bias terms. Incoming edges are summed in
//! ascending source-layer order and each vector-matrix product accumulates one
//! weight row at a time, so a trace is a deterministic function of its inputs.

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::params::WeightSet;
use crate::reduce;
use crate::topology::DagTopology;

/// Pre-activations and outputs of every layer for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `S_j`; the entry for the input layer is empty.
    pub pre: Vec<Vec<f64>>,
    /// `H_j`; `H_0` is the input itself.
    pub out: Vec<Vec<f64>>,
}

impl ForwardTrace {
    /// Network output `y = H_L`.
    pub fn output(&self) -> &[f64] {
        self.out.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn check_input(topology: &DagTopology, x: &[f64]) -> Result<()> {
    if x.len() != topology.input_width() {
        return Err(Error::DimensionMismatch {
            what: "input vector",
            expected: topology.input_width(),
            found: x.len(),
        });
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteValue { layer: 0 });
    }
    Ok(())
}

/// Computes `S_j` and `H_j` for one layer from the already-populated sources.
fn propagate_layer(
    topology: &DagTopology,
    weights: &WeightSet,
    activation: Activation,
    layer: usize,
    trace: &mut ForwardTrace,
) -> Result<()> {
    let mut s = vec![0.0; topology.width(layer)];
    for &idx in topology.incoming(layer) {
        let from = topology.edges()[idx].from;
        debug_assert!(
            !trace.out[from].is_empty(),
            "layer {from} evaluated after its successor {layer}"
        );
        weights.matrix(idx).accumulate_vec_mul(&trace.out[from], &mut s);
    }
    if !s.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteValue { layer });
    }
    trace.out[layer] = s.iter().map(|&v| activation.eval(v)).collect();
    trace.pre[layer] = s;
    Ok(())
}

fn empty_trace(topology: &DagTopology) -> ForwardTrace {
    ForwardTrace {
        pre: vec![Vec::new(); topology.num_layers()],
        out: vec![Vec::new(); topology.num_layers()],
    }
}

/// Forward pass in index order.
pub fn forward(
    topology: &DagTopology,
    weights: &WeightSet,
    activation: Activation,
    x: &[f64],
) -> Result<ForwardTrace> {
    weights.check_against(topology, "weights and topology")?;
    check_input(topology, x)?;
    let mut trace = empty_trace(topology);
    trace.out[0] = x.to_vec();
    for layer in 1..topology.num_layers() {
        propagate_layer(topology, weights, activation, layer, &mut trace)?;
    }
    Ok(trace)
}

/// Forward pass visiting layers in an arbitrary topological `order`.
pub fn forward_in_order(
    topology: &DagTopology,
    weights: &WeightSet,
    activation: Activation,
    x: &[f64],
    order: &[usize],
) -> Result<ForwardTrace> {
    if !topology.is_topological_order(order) {
        return Err(Error::TraceMismatch(format!(
            "{order:?} is not a topological order of the layers"
        )));
    }
    weights.check_against(topology, "weights and topology")?;
    check_input(topology, x)?;
    let mut trace = empty_trace(topology);
    trace.out[0] = x.to_vec();
    for &layer in &order[1..] {
        propagate_layer(topology, weights, activation, layer, &mut trace)?;
    }
    Ok(trace)
}

/// Seeds layer `start` with `values` and propagates through layers
/// `start+1..=L`. Every edge entering those layers must originate at or after
/// `start`; layers before `start` are left empty in the returned trace.
pub fn forward_from(
    topology: &DagTopology,
    weights: &WeightSet,
    activation: Activation,
    start: usize,
    values: &[f64],
) -> Result<ForwardTrace> {
    weights.check_against(topology, "weights and topology")?;
    if start > topology.output_layer() {
        return Err(Error::TraceMismatch(format!("no layer {start}")));
    }
    if values.len() != topology.width(start) {
        return Err(Error::DimensionMismatch {
            what: "seed layer values",
            expected: topology.width(start),
            found: values.len(),
        });
    }
    if let Some(e) = topology
        .edges()
        .iter()
        .find(|e| e.from < start && e.to > start)
    {
        return Err(Error::TraceMismatch(format!(
            "edge {e} reaches past seed layer {start}"
        )));
    }
    let mut trace = empty_trace(topology);
    trace.out[start] = values.to_vec();
    for layer in start + 1..topology.num_layers() {
        propagate_layer(topology, weights, activation, layer, &mut trace)?;
    }
    Ok(trace)
}

/// Squared-error loss of one sample, `||d - y||^2 / 2`.
pub fn sample_error(output: &[f64], target: &[f64]) -> f64 {
    0.5 * output
        .iter()
        .zip(target)
        .map(|(y, d)| (d - y) * (d - y))
        .sum::<f64>()
}

pub(crate) fn check_batch(
    topology: &DagTopology,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<()> {
    if inputs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            what: "number of targets",
            expected: inputs.len(),
            found: targets.len(),
        });
    }
    if inputs.is_empty() {
        return Err(Error::DimensionMismatch {
            what: "batch size",
            expected: 1,
            found: 0,
        });
    }
    for d in targets {
        if d.len() != topology.output_width() {
            return Err(Error::DimensionMismatch {
                what: "target vector",
                expected: topology.output_width(),
                found: d.len(),
            });
        }
    }
    Ok(())
}

/// Total error `E = sum_p ||d^p - y^p||^2 / 2`, reduced in the fixed block/tree
/// shape of [`reduce`].
pub fn batch_error(
    topology: &DagTopology,
    weights: &WeightSet,
    activation: Activation,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<f64> {
    check_batch(topology, inputs, targets)?;
    let errors = inputs
        .iter()
        .zip(targets)
        .map(|(x, d)| Ok(sample_error(forward(topology, weights, activation, x)?.output(), d)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(reduce::sum(&errors))
}
