//! Crate-wide error type.

use thiserror::Error;

use crate::geodesics::DiscreteCurve;

#[derive(Debug, Error)]
pub enum AtlasError {
    /// A chart point lies outside the manifold's rectangular domain.
    #[error("point {point:?} outside domain {domain:?} (coordinate {coord})")]
    Domain {
        point: Vec<f64>,
        domain: Vec<(f64, f64)>,
        coord: usize,
    },

    /// An evaluation produced NaN or infinity.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// The induced metric is numerically singular (det below threshold or
    /// the immersion Jacobian is rank-deficient).
    #[error("singular metric at {point:?}: {detail}")]
    SingularMetric { point: Vec<f64>, detail: String },

    /// Vector/matrix dimensions do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A trajectory left the chart domain; carries the in-domain prefix.
    #[error("trajectory left the chart domain after {} points", .curve.points.len())]
    DomainExit { curve: Box<DiscreteCurve> },

    /// Flow tracing stalled (e.g. near a cut locus); carries the partial path.
    #[error("flow trace stagnated after {} points (phi = {last_phi})", .curve.points.len())]
    Stagnation {
        curve: Box<DiscreteCurve>,
        last_phi: f64,
    },

    #[error("empty batch")]
    EmptyBatch,

    #[error("empty sample set")]
    EmptySamples,

    /// Armijo backtracking exhausted its budget; the optimiser has stalled.
    #[error("line search failed after {backtracks} backtracks (gradient norm {grad_norm:.3e})")]
    LineSearchFailure { backtracks: usize, grad_norm: f64 },

    /// Malformed or incompatible checkpoint / report document.
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Grid graph has unreachable nodes (cannot occur on full rectangular grids).
    #[error("grid graph is disconnected: {unreachable} unreachable nodes")]
    Disconnected { unreachable: usize },

    /// Training diverged (NaN loss); diagnostics attached.
    #[error("training aborted at step {step}: {detail}")]
    TrainingAborted { step: usize, detail: String },
}

pub type Result<T> = std::result::Result<T, AtlasError>;
