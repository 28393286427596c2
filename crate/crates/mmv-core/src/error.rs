//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by matrix validation, special functions, kernels,
/// transforms, densities, samplers and fitting.
#[derive(Debug, Clone, Error)]
pub enum MmvError {
    /// Structural problem: dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Input matrix is not symmetric within tolerance.
    #[error("matrix not symmetric: max asymmetry {max_asym:.3e} exceeds {tol:.3e}")]
    NotSymmetric { max_asym: f64, tol: f64 },

    /// Input matrix has an eigenvalue at or below the positive-definiteness floor.
    #[error(
        "matrix not positive definite: eigenvalue {eigenvalue:.6e} at or below floor {floor:.6e}"
    )]
    NotPositiveDefinite { eigenvalue: f64, floor: f64 },

    /// A factorization hit an eigenvalue below the floor.
    #[error("near-singular matrix: eigenvalue {eigenvalue:.6e} below floor {floor:.6e}")]
    NearSingular { eigenvalue: f64, floor: f64 },

    /// Scalar argument outside the admissible domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// NaN or infinity in an input that must be finite.
    #[error("non-finite entries in input")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, MmvError>;
