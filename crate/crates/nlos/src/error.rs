//! Crate-wide error type.

use alloc::string::String;
use core::fmt;

/// Errors produced by geometry validation, operator application, and solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A constructor argument violates a documented invariant.
    InvalidParameter(String),
    /// Array dimensions do not match the geometry they are paired with.
    ShapeMismatch(String),
    /// A scene primitive extends outside the hidden-volume bounds.
    PrimitiveOutOfBounds(String),
    /// A voxel center coincides with a wall sample point (zero path length).
    DegenerateGeometry { sample: usize, voxel: usize },
    /// Dense-operator construction would exceed the entry budget.
    SizeGuard { entries: u128, limit: u128 },
    /// Dense visibility storage would exceed the configured byte budget.
    MemoryBudget { required: u128, budget: u128 },
    /// A solver's data-fidelity term grew past the divergence threshold.
    Divergence { iteration: usize, fidelity: f64, initial: f64 },
    /// A solver produced a non-finite iterate.
    NonFinite(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::PrimitiveOutOfBounds(msg) => write!(f, "primitive out of bounds: {msg}"),
            Error::DegenerateGeometry { sample, voxel } => write!(
                f,
                "degenerate geometry: voxel {voxel} coincides with wall sample {sample}"
            ),
            Error::SizeGuard { entries, limit } => write!(
                f,
                "dense operator too large: {entries} entries exceeds limit {limit}"
            ),
            Error::MemoryBudget { required, budget } => write!(
                f,
                "visibility field needs {required} bytes, budget is {budget}"
            ),
            Error::Divergence { iteration, fidelity, initial } => write!(
                f,
                "solver diverged at iteration {iteration}: fidelity {fidelity:.3e} \
                 exceeds 10x initial {initial:.3e}"
            ),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
