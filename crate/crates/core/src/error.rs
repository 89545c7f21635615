use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("topology has {0} layers; at least an input and an output layer are required")]
    TooFewLayers(usize),
    #[error("layer {0} has zero width")]
    ZeroWidth(usize),
    #[error("edge ({from},{to}) does not point to a higher layer")]
    CyclicOrBackwardEdge { from: usize, to: usize },
    #[error("edge ({from},{to}) references a layer beyond the output layer {last}")]
    EdgeOutOfRange { from: usize, to: usize, last: usize },
    #[error("layer {layer} has no {direction} edge")]
    DeadLayer { layer: usize, direction: &'static str },
    #[error("edge ({from},{to}) crosses the code layer {code}")]
    CodeCutViolation { from: usize, to: usize, code: usize },
    #[error("code layer {code} must lie strictly between 0 and {last}")]
    CodeLayerOutOfRange { code: usize, last: usize },
    #[error("invalid code layer dimensions: {0}")]
    CodeDimension(String),

    #[error("unknown activation `{0}`")]
    UnknownActivation(String),
    #[error("activation `{0}` is outside the convergence-checked set; enable unchecked activations to use it")]
    UncheckedActivation(String),
    #[error("non-finite activation argument {0}")]
    NonFiniteInput(f64),

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value produced at layer {layer}")]
    NonFiniteValue { layer: usize },
    #[error("forward trace does not match the network: {0}")]
    TraceMismatch(String),
    #[error("edge sets of {0} do not match")]
    KeyMismatch(&'static str),
    #[error("weight update on edge ({from},{to}) is not finite")]
    NonFiniteUpdate { from: usize, to: usize },
    #[error("{0}")]
    DomainError(String),

    #[error("trajectory has no step with a usable remainder ratio")]
    InsufficientData,
    #[error("step {k}: zero second-order increment but nonzero prediction residual {residual:e}")]
    UnboundedRatio { k: usize, residual: f64 },

    #[error("image shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("reference image has zero energy; NRMSE is undefined")]
    DegenerateReference,
    #[error("image {rows}x{cols} is smaller than the minimum {min}x{min}")]
    TooSmall { rows: usize, cols: usize, min: usize },

    #[error("malformed PGM header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("{path} is {found:?}, expected {expected:?}")]
    InconsistentDimensions {
        path: PathBuf,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("PGM maxval is zero in {0}")]
    MaxvalZero(PathBuf),
    #[error("requested {requested} training samples from a dataset of {available}")]
    CountTooLarge { requested: usize, available: usize },

    #[error("{weights} weights exceed the finite-difference limit of {limit}")]
    TooLargeForFiniteDifference { weights: usize, limit: usize },

    #[error("parse error: {0}")]
    Parse(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
