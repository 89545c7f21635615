//! Layered DAG architectures.
//!
//! Layers are numbered `0..=L`; every edge `(i, j)` carries a dense weight
//! matrix from layer `i` to layer `j` and must satisfy `i < j`. Edges that are
//! not listed are structural zeros and are never created or updated.
//!
//! Topologies are described in a small TOML document:
//!
//! ```toml
//! widths = [4, 3, 2, 3, 4]
//! edges = [[0, 1], [1, 2], [2, 3], [3, 4], [0, 2], [2, 4]]
//! code_layer = 2   # optional, autoencoders only
//! ```
//!
//! Whitespace (including line breaks inside arrays) is insignificant and `#`
//! starts a comment. `edges` is a set: order and duplicates are irrelevant.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Directed edge from layer `from` to layer `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
}

impl Edge {
    pub const fn new(from: usize, to: usize) -> Self {
        Self { from, to }
    }

    pub fn is_skip(&self) -> bool {
        self.to > self.from + 1
    }
}

impl std::fmt::Display for Edge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.from, self.to)
    }
}

/// Unvalidated topology description, as read from a file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTopology {
    pub widths: Vec<usize>,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_layer: Option<usize>,
}

/// A validated layered DAG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DagTopology {
    widths: Vec<usize>,
    /// Sorted by `(from, to)`.
    edges: Vec<Edge>,
    code_layer: Option<usize>,
    /// Indices into `edges` per target layer, ascending source layer.
    incoming: Vec<Vec<usize>>,
    /// Indices into `edges` per source layer, ascending target layer.
    outgoing: Vec<Vec<usize>>,
}

impl DagTopology {
    /// Validates a raw description.
    pub fn validate(raw: &RawTopology) -> Result<Self> {
        let widths = raw.widths.clone();
        if widths.len() < 2 {
            return Err(Error::TooFewLayers(widths.len()));
        }
        if let Some(layer) = widths.iter().position(|&w| w == 0) {
            return Err(Error::ZeroWidth(layer));
        }
        let last = widths.len() - 1;

        let mut edges = Vec::with_capacity(raw.edges.len());
        for &[from, to] in &raw.edges {
            if from >= to {
                return Err(Error::CyclicOrBackwardEdge { from, to });
            }
            if to > last {
                return Err(Error::EdgeOutOfRange { from, to, last });
            }
            edges.push(Edge::new(from, to));
        }
        edges.sort_unstable();
        edges.dedup();

        let mut incoming = vec![Vec::new(); widths.len()];
        let mut outgoing = vec![Vec::new(); widths.len()];
        for (idx, e) in edges.iter().enumerate() {
            incoming[e.to].push(idx);
            outgoing[e.from].push(idx);
        }
        // `edges` is sorted by source, so per-target lists are already ascending
        // in source; per-source lists ascend in target for the same reason.
        for layer in 1..=last {
            if incoming[layer].is_empty() {
                return Err(Error::DeadLayer {
                    layer,
                    direction: "incoming",
                });
            }
        }
        for layer in 0..last {
            if outgoing[layer].is_empty() {
                return Err(Error::DeadLayer {
                    layer,
                    direction: "outgoing",
                });
            }
        }

        if let Some(code) = raw.code_layer {
            if code == 0 || code >= last {
                return Err(Error::CodeLayerOutOfRange { code, last });
            }
            if let Some(e) = edges.iter().find(|e| e.from < code && code < e.to) {
                return Err(Error::CodeCutViolation {
                    from: e.from,
                    to: e.to,
                    code,
                });
            }
            if widths[code] >= widths[0] {
                return Err(Error::CodeDimension(format!(
                    "code width {} is not smaller than input width {}",
                    widths[code], widths[0]
                )));
            }
            if widths[last] != widths[0] {
                return Err(Error::CodeDimension(format!(
                    "output width {} differs from input width {}",
                    widths[last], widths[0]
                )));
            }
        }

        Ok(Self {
            widths,
            edges,
            code_layer: raw.code_layer,
            incoming,
            outgoing,
        })
    }

    pub fn new(widths: &[usize], edges: &[(usize, usize)], code_layer: Option<usize>) -> Result<Self> {
        Self::validate(&RawTopology {
            widths: widths.to_vec(),
            edges: edges.iter().map(|&(i, j)| [i, j]).collect(),
            code_layer,
        })
    }

    /// Chain topology `0 -> 1 -> ... -> L`.
    pub fn sequential(widths: &[usize]) -> Result<Self> {
        let edges: Vec<_> = (1..widths.len()).map(|j| (j - 1, j)).collect();
        Self::new(widths, &edges, None)
    }

    /// Every pair `i < j` connected.
    pub fn dense(widths: &[usize]) -> Result<Self> {
        let mut edges = Vec::new();
        for j in 1..widths.len() {
            for i in 0..j {
                edges.push((i, j));
            }
        }
        Self::new(widths, &edges, None)
    }

    /// Autoencoder with all-pairs edges inside the encoder block `0..=code`
    /// and inside the decoder block `code..=L`, and none across the code layer.
    pub fn cross_encoder(widths: &[usize], code_layer: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for j in 1..widths.len() {
            let lo = if j > code_layer { code_layer } else { 0 };
            for i in lo..j {
                edges.push((i, j));
            }
        }
        Self::new(widths, &edges, Some(code_layer))
    }

    /// Same widths and code layer with only the chain edges `(i, i+1)`.
    pub fn sequential_counterpart(&self) -> Self {
        let edges: Vec<_> = (1..self.widths.len()).map(|j| (j - 1, j)).collect();
        Self::new(&self.widths, &edges, self.code_layer)
            .expect("chain over a valid topology's widths is valid")
    }

    /// Copy with layer `layer` resized. The result is revalidated.
    pub fn with_width(&self, layer: usize, width: usize) -> Result<Self> {
        let mut raw = self.to_raw();
        if layer >= raw.widths.len() {
            return Err(Error::Config(format!("layer {layer} does not exist")));
        }
        raw.widths[layer] = width;
        Self::validate(&raw)
    }

    /// Index of the output layer, `L`.
    #[inline]
    pub fn output_layer(&self) -> usize {
        self.widths.len() - 1
    }

    #[inline]
    pub fn num_layers(&self) -> usize {
        self.widths.len()
    }

    #[inline]
    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    #[inline]
    pub fn width(&self, layer: usize) -> usize {
        self.widths[layer]
    }

    #[inline]
    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    #[inline]
    pub fn output_width(&self) -> usize {
        self.widths[self.output_layer()]
    }

    #[inline]
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    #[inline]
    pub fn code_layer(&self) -> Option<usize> {
        self.code_layer
    }

    /// Edge indices into [`edges`](Self::edges) entering `layer`, ascending source.
    #[inline]
    pub fn incoming(&self, layer: usize) -> &[usize] {
        &self.incoming[layer]
    }

    /// Edge indices into [`edges`](Self::edges) leaving `layer`, ascending target.
    #[inline]
    pub fn outgoing(&self, layer: usize) -> &[usize] {
        &self.outgoing[layer]
    }

    pub fn edge_index(&self, edge: Edge) -> Option<usize> {
        self.edges.binary_search(&edge).ok()
    }

    /// Number of scalar weights over all edges.
    pub fn num_weights(&self) -> usize {
        self.edges
            .iter()
            .map(|e| self.widths[e.from] * self.widths[e.to])
            .sum()
    }

    pub fn is_sequential(&self) -> bool {
        self.edges.iter().all(|e| e.to == e.from + 1)
    }

    pub fn to_raw(&self) -> RawTopology {
        RawTopology {
            widths: self.widths.clone(),
            edges: self.edges.iter().map(|e| [e.from, e.to]).collect(),
            code_layer: self.code_layer,
        }
    }

    /// Canonical text form: edges sorted, one key per line.
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        let widths: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        let _ = writeln!(out, "widths = [{}]", widths.join(", "));
        let edges: Vec<String> = self
            .edges
            .iter()
            .map(|e| format!("[{}, {}]", e.from, e.to))
            .collect();
        let _ = writeln!(out, "edges = [{}]", edges.join(", "));
        if let Some(c) = self.code_layer {
            let _ = writeln!(out, "code_layer = {c}");
        }
        out
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawTopology = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::validate(&raw)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    /// SHA-256 of the canonical text form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Checks that `order` is a permutation of the layers that visits every
    /// edge source before its target and starts at the input layer.
    pub fn is_topological_order(&self, order: &[usize]) -> bool {
        if order.len() != self.widths.len() || order.first() != Some(&0) {
            return false;
        }
        let mut position = vec![usize::MAX; self.widths.len()];
        for (pos, &layer) in order.iter().enumerate() {
            if layer >= position.len() || position[layer] != usize::MAX {
                return false;
            }
            position[layer] = pos;
        }
        self.edges.iter().all(|e| position[e.from] < position[e.to])
    }
}
