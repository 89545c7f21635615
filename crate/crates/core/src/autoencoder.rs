//! Compression models: a topology with a code layer that no edge crosses.
//!
//! Because every edge stays on one side of the code layer `c`, the decoder
//! only ever sees `H_c`, and `decode(encode(x))` is the full forward output.

use crate::activations::Activation;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::{batch_error, forward, forward_from};
use crate::params::WeightSet;
use crate::topology::DagTopology;

#[derive(Debug, Clone, PartialEq)]
pub struct CompressionModel {
    topology: DagTopology,
    weights: WeightSet,
    activation: Activation,
}

impl CompressionModel {
    pub fn new(topology: DagTopology, weights: WeightSet, activation: Activation) -> Result<Self> {
        if topology.code_layer().is_none() {
            return Err(Error::CodeDimension("topology has no code layer".into()));
        }
        weights.check_against(&topology, "weights and topology")?;
        Ok(Self {
            topology,
            weights,
            activation,
        })
    }

    pub fn topology(&self) -> &DagTopology {
        &self.topology
    }

    pub fn weights(&self) -> &WeightSet {
        &self.weights
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn into_weights(self) -> WeightSet {
        self.weights
    }

    pub fn code_layer(&self) -> usize {
        self.topology.code_layer().expect("checked at construction")
    }

    pub fn code_width(&self) -> usize {
        self.topology.width(self.code_layer())
    }

    /// `H_c` for input `x`.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        let trace = forward(&self.topology, &self.weights, self.activation, x)?;
        Ok(trace.out[self.code_layer()].clone())
    }

    /// Propagates layers after the code layer from `code`.
    pub fn decode(&self, code: &[f64]) -> Result<Vec<f64>> {
        let trace = forward_from(&self.topology, &self.weights, self.activation, self.code_layer(), code)?;
        Ok(trace.output().to_vec())
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(forward(&self.topology, &self.weights, self.activation, x)?.output().to_vec())
    }

    /// `sum_p ||x_p - y(x_p)||^2 / 2`.
    pub fn reconstruction_error(&self, data: &Dataset) -> Result<f64> {
        batch_error(&self.topology, &self.weights, self.activation, data.samples(), data.samples())
    }
}
