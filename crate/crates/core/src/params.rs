//! Per-edge matrix collections and their on-disk container.
//!
//! Weights, gradients and weight increments all share one representation: one
//! dense matrix of shape `l_i x l_j` per topology edge `(i, j)`, stored in the
//! topology's canonical edge order.
//!
//! The text container looks like
//!
//! ```text
//! dagnet-edge-matrices 1
//! kind weights
//! topology <sha256 of the canonical topology text>
//! meta activation tanh
//! edges 2
//! edge 0 1 2 3
//! <row 0 values>
//! <row 1 values>
//! edge 1 2 3 1
//! ...
//! ```
//!
//! Values are written in shortest round-trip form, so a save/load cycle is
//! bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::topology::{DagTopology, Edge};

const MAGIC: &str = "dagnet-edge-matrices 1";

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMatrices {
    edges: Vec<Edge>,
    mats: Vec<Matrix>,
}

/// Weight matrices `v_(i,j)`, keyed by the topology's edge set.
pub type WeightSet = EdgeMatrices;

impl EdgeMatrices {
    pub fn zeros(topology: &DagTopology) -> Self {
        Self::from_fn(topology, |_, _, _| 0.0)
    }

    pub fn filled(topology: &DagTopology, value: f64) -> Self {
        Self::from_fn(topology, |_, _, _| value)
    }

    /// Builds one matrix per edge; `f(edge, row, col)`.
    pub fn from_fn(topology: &DagTopology, mut f: impl FnMut(Edge, usize, usize) -> f64) -> Self {
        let edges = topology.edges().to_vec();
        let mats = edges
            .iter()
            .map(|&e| Matrix::from_fn(topology.width(e.from), topology.width(e.to), |r, c| f(e, r, c)))
            .collect();
        Self { edges, mats }
    }

    /// Uniform initialisation in `±scale / sqrt(fan_in)`, where `fan_in` is the
    /// total width feeding the edge's target layer.
    pub fn random<R: Rng + ?Sized>(topology: &DagTopology, scale: f64, rng: &mut R) -> Self {
        let fan_in: Vec<usize> = (0..topology.num_layers())
            .map(|j| {
                topology
                    .incoming(j)
                    .iter()
                    .map(|&idx| topology.width(topology.edges()[idx].from))
                    .sum()
            })
            .collect();
        Self::from_fn(topology, |e, _, _| {
            let bound = scale / (fan_in[e.to] as f64).sqrt();
            rng.gen_range(-bound..=bound)
        })
    }

    /// [`Self::random`] driven by a ChaCha8 stream seeded with `seed`.
    pub fn seeded(topology: &DagTopology, scale: f64, seed: u64) -> Self {
        Self::random(topology, scale, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Assembles a collection from explicit matrices. The edges must match the
    /// topology exactly and each matrix must have the edge's shape.
    pub fn from_parts(topology: &DagTopology, parts: Vec<(Edge, Matrix)>) -> Result<Self> {
        let mut parts = parts;
        parts.sort_by_key(|(e, _)| *e);
        let (edges, mats): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
        let out = Self { edges, mats };
        out.check_against(topology, "matrices and topology")?;
        Ok(out)
    }

    #[inline]
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    #[inline]
    pub fn matrices(&self) -> &[Matrix] {
        &self.mats
    }

    #[inline]
    pub fn matrices_mut(&mut self) -> &mut [Matrix] {
        &mut self.mats
    }

    #[inline]
    pub fn matrix(&self, idx: usize) -> &Matrix {
        &self.mats[idx]
    }

    #[inline]
    pub fn matrix_mut(&mut self, idx: usize) -> &mut Matrix {
        &mut self.mats[idx]
    }

    pub fn get(&self, edge: Edge) -> Option<&Matrix> {
        self.edges.binary_search(&edge).ok().map(|i| &self.mats[i])
    }

    pub fn get_mut(&mut self, edge: Edge) -> Option<&mut Matrix> {
        self.edges.binary_search(&edge).ok().map(|i| &mut self.mats[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Edge, &Matrix)> {
        self.edges.iter().copied().zip(&self.mats)
    }

    pub fn num_entries(&self) -> usize {
        self.mats.iter().map(Matrix::len).sum()
    }

    /// Sum over edges of squared Frobenius norms.
    pub fn norm_sq(&self) -> f64 {
        self.mats.iter().map(Matrix::norm_sq).sum()
    }

    /// Sum over edges of Frobenius inner products.
    pub fn dot(&self, other: &EdgeMatrices) -> Result<f64> {
        self.check_keys(other, "edge matrix pair")?;
        Ok(self
            .mats
            .iter()
            .zip(&other.mats)
            .map(|(a, b)| a.frobenius_dot(b))
            .sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.mats.iter().fold(0.0, |m, a| m.max(a.max_abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.mats.iter().all(Matrix::is_finite)
    }

    pub fn fill(&mut self, value: f64) {
        self.mats.iter_mut().for_each(|m| m.fill(value));
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &EdgeMatrices) -> Result<()> {
        self.check_keys(other, "edge matrix pair")?;
        for (a, b) in self.mats.iter_mut().zip(&other.mats) {
            a.add_scaled(alpha, b);
        }
        Ok(())
    }

    /// Whether both collections have the same edges with the same shapes.
    pub fn same_keys(&self, other: &EdgeMatrices) -> bool {
        self.edges == other.edges
            && self
                .mats
                .iter()
                .zip(&other.mats)
                .all(|(a, b)| a.shape() == b.shape())
    }

    pub(crate) fn check_keys(&self, other: &EdgeMatrices, what: &'static str) -> Result<()> {
        if self.same_keys(other) {
            Ok(())
        } else {
            Err(Error::KeyMismatch(what))
        }
    }

    /// Whether the collection is keyed exactly by `topology`'s edges with the right shapes.
    pub fn matches(&self, topology: &DagTopology) -> bool {
        self.edges == topology.edges()
            && self
                .iter()
                .all(|(e, m)| m.shape() == (topology.width(e.from), topology.width(e.to)))
    }

    pub(crate) fn check_against(&self, topology: &DagTopology, what: &'static str) -> Result<()> {
        if self.matches(topology) {
            Ok(())
        } else {
            Err(Error::KeyMismatch(what))
        }
    }

    /// Serialises into the text container.
    pub fn to_container(&self, kind: &str, topology: &DagTopology, meta: &[(&str, &str)]) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "kind {kind}");
        let _ = writeln!(out, "topology {}", topology.hash());
        for (k, v) in meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        let _ = writeln!(out, "edges {}", self.edges.len());
        for (e, m) in self.iter() {
            let _ = writeln!(out, "edge {} {} {} {}", e.from, e.to, m.rows(), m.cols());
            for r in 0..m.rows() {
                let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:e}")).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
        out
    }

    /// Parses a text container written for `topology`.
    pub fn from_container(text: &str, topology: &DagTopology) -> Result<Container> {
        let bad = |msg: String| Error::Parse(format!("edge-matrix container: {msg}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some(MAGIC) {
            return Err(bad("missing header".into()));
        }
        let mut kind = String::new();
        let mut meta = Vec::new();
        let mut expected_edges = None;
        let mut hash_ok = false;
        for line in lines.by_ref() {
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("kind") => kind = parts.collect::<Vec<_>>().join(" "),
                Some("topology") => {
                    let h = parts.next().unwrap_or_default();
                    if h != topology.hash() {
                        return Err(Error::KeyMismatch("container topology hash and topology"));
                    }
                    hash_ok = true;
                }
                Some("meta") => {
                    let k = parts.next().ok_or_else(|| bad("empty meta line".into()))?;
                    meta.push((k.to_string(), parts.collect::<Vec<_>>().join(" ")));
                }
                Some("edges") => {
                    let n = parts
                        .next()
                        .and_then(|n| n.parse::<usize>().ok())
                        .ok_or_else(|| bad("bad edge count".into()))?;
                    expected_edges = Some(n);
                    break;
                }
                other => return Err(bad(format!("unexpected line {other:?}"))),
            }
        }
        if !hash_ok {
            return Err(bad("missing topology hash".into()));
        }
        let n = expected_edges.ok_or_else(|| bad("missing edge count".into()))?;
        let mut parts = Vec::with_capacity(n);
        for _ in 0..n {
            let head = lines.next().ok_or_else(|| bad("truncated".into()))?;
            let nums: Vec<usize> = head
                .split_whitespace()
                .skip(1)
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(e.to_string()))?;
            if !head.starts_with("edge ") || nums.len() != 4 {
                return Err(bad(format!("bad edge line {head:?}")));
            }
            let (rows, cols) = (nums[2], nums[3]);
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let line = lines.next().ok_or_else(|| bad("truncated matrix".into()))?;
                for tok in line.split_whitespace() {
                    data.push(tok.parse::<f64>().map_err(|e| bad(e.to_string()))?);
                }
            }
            if data.len() != rows * cols {
                return Err(bad(format!("edge ({},{}) has {} values", nums[0], nums[1], data.len())));
            }
            parts.push((Edge::new(nums[0], nums[1]), Matrix::from_vec(rows, cols, data)));
        }
        let matrices = Self::from_parts(topology, parts)?;
        Ok(Container {
            kind,
            meta,
            matrices,
        })
    }

    pub fn save(
        &self,
        path: impl AsRef<Path>,
        kind: &str,
        topology: &DagTopology,
        meta: &[(&str, &str)],
    ) -> Result<()> {
        std::fs::write(path, self.to_container(kind, topology, meta))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, topology: &DagTopology) -> Result<Container> {
        Self::from_container(&std::fs::read_to_string(path)?, topology)
    }
}

/// A parsed container: its kind tag, metadata and matrices.
#[derive(Debug, Clone)]
pub struct Container {
    pub kind: String,
    pub meta: Vec<(String, String)>,
    pub matrices: EdgeMatrices,
}

impl Container {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}
