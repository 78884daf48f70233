use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the command line to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("point ({x}, {y}) is {dist:e} from the inclusion center; polar derivatives are undefined there")]
    DegenerateCenter { x: f64, y: f64, dist: f64 },

    #[error("point ({x}, {y}) lies inside the inclusion (phi = {phi:e})")]
    InsideInclusion { x: f64, y: f64, phi: f64 },

    #[error("point ({x}, {y}) is not on the inclusion boundary (|phi| = {phi:e})")]
    OffBoundary { x: f64, y: f64, phi: f64 },

    #[error("point ({x}, {y}) is not on the outer square perimeter")]
    OffPerimeter { x: f64, y: f64 },

    #[error("band sampling exhausted after {rejections} consecutive rejections")]
    SamplingExhausted { rejections: usize },

    #[error("unsupported loss primitive `{0}`")]
    UnsupportedPrimitive(String),

    #[error("{what} set is empty but its loss term is enabled")]
    EmptyPointSet { what: &'static str },

    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite { what: &'static str, iteration: u64 },

    #[error("degenerate mesh cell at (j = {j}, k = {k}) with signed area {area:e}")]
    DegenerateCell { j: usize, k: usize, area: f64 },

    #[error("boundary edge ({a}, {b}) carries no boundary tag")]
    UntaggedEdge { a: usize, b: usize },

    #[error("singular or ill-conditioned system: {detail}")]
    Singular { detail: String },

    #[error("linear solve residual {residual:e} exceeds tolerance {tolerance:e}")]
    SolveResidual { residual: f64, tolerance: f64 },

    #[error("point ({x}, {y}) is outside the mesh")]
    OutsideMesh { x: f64, y: f64 },

    #[error("reference field is identically zero")]
    ZeroReference,

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("checkpoint shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("parse error in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_)
            | Error::UnknownStrategy { .. }
            | Error::Parse { .. }
            | Error::ShapeMismatch(_)
            | Error::Checkpoint { .. } => ErrorClass::Config,
            Error::Io(_) | Error::Csv(_) => ErrorClass::Io,
            _ => ErrorClass::Numerical,
        }
    }
}
