//! A pseudospectral simulation laboratory for electro-diffusion flows on
//! periodic domains.
//!
//! The library integrates two coupled systems side by side:
//!
//! * the full electro-diffusion model — two charge densities advected by an
//!   incompressible flow, drifting in the self-consistent electric field of a
//!   screened Poisson equation with Debye length `λ`;
//! * its quasineutral (`λ → 0`) limit, where the Poisson equation collapses
//!   to the algebraic constraint `n − p = D(x)` and the electric field is
//!   determined by a variable-coefficient elliptic equation.
//!
//! On top of the solvers sit error diagnostics (λ-weighted energy
//! functionals and Sobolev norms of the trajectory differences) and an
//! experiment harness that sweeps `λ`, fits convergence rates, and verifies
//! the discretization by manufactured solutions.

pub mod diagnostics;
pub mod harness;
pub mod model;
pub mod npns;
pub mod quasineutral;
pub mod spectral;
mod stepping;

pub use spectral::{Grid, ScalarField, VectorField};
