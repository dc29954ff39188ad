//! Periodic pseudospectral toolbox: transforms, differentiation, dealiasing,
//! inverse Laplacian, Leray projection, and Sobolev norms.
//!
//! Every operation is a pure function of its inputs; fields are immutable
//! values that may be sent between threads, so independent transforms can run
//! concurrently without locking.

mod field;
pub mod grid;
mod ops;

pub use field::{Complex64, ScalarField, VectorField};
pub use grid::Grid;
pub use ops::{
    dealias, dealias_vector, dealiased_product, divergence, grad_norm_sq, grad_norm_sq_vector,
    gradient, inverse_laplacian, l2_norm, l2_norm_sq, l2_norm_sq_vector, l2_norm_vector, laplacian,
    laplacian_norm_sq, laplacian_norm_sq_vector, laplacian_vector, leray_project,
    pointwise_product, sobolev_norm, sobolev_norm_sq, sobolev_norm_sq_vector, sobolev_norm_vector,
    zero_mean,
};

/// Errors from the spectral toolbox.
#[derive(Debug, thiserror::Error)]
pub enum SpectralError {
    /// The inverse Laplacian needs a mean-free right-hand side on the torus;
    /// a nonzero mean signals an incompatible Poisson problem.
    #[error("right-hand side has nonzero mean {mean:.3e} (norm {norm:.3e}); the periodic Poisson problem is incompatible")]
    NonZeroMean { mean: f64, norm: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}
