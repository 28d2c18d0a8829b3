//! Error type shared across the crate.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("hermiticity defect {defect:.3e} exceeds {tol:.3e} (relative to max entry)")]
    NotHermitian { defect: f64, tol: f64 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("eigendecomposition failed: {0}")]
    Lapack(String),

    #[error("decomposition residual {residual:.3e} above tolerance; input is likely ill-conditioned")]
    DecompositionResidual { residual: f64 },

    #[error("spectral parameter must lie off the real axis, got {z}")]
    RealSpectralPoint { z: Complex64 },

    #[error("Schatten index must satisfy p >= 1, got {0}")]
    InvalidSchattenIndex(f64),

    #[error("function value not finite at eigenvalue {lambda}")]
    NonFiniteFunction { lambda: f64 },

    #[error("extension order ell={ell} needs derivatives up to {needed}, bundle provides {available}")]
    InsufficientOrder {
        ell: usize,
        needed: usize,
        available: usize,
    },

    #[error("{0}")]
    InvalidParameter(String),

    #[error("quadrature plan invalid: {0}")]
    InvalidPlan(String),

    #[error("symbol tail diverges for beta={beta} (integrability needs beta < -1)")]
    DivergentTail { beta: f64 },

    #[error("contour of radius {radius} about {center} reaches the real axis")]
    ContourTouchesAxis { center: Complex64, radius: f64 },

    #[error("majorant ratio unbounded on grid (max {max_ratio:.3e}); check beta or derivative bundle")]
    UnboundedRatio { max_ratio: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
