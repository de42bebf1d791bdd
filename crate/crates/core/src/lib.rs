//! Numerical machinery for pressure regularity of the transient Stokes
//! system with zero initial data.
//!
//! The crate is organised by subsystem:
//!
//! * [`geometry`]: star-shaped domains, boundary charts, cutoffs.
//! * [`bogovskii`]: the Bogovskii right inverse of the divergence.
//! * [`helmholtz`]: extension and spectral Leray projection.
//! * [`stokes`]: implicit-Euler MAC solver for the Stokes system.
//! * [`transform`]: boundary flattening identities and pressure Hessian recovery.
//! * [`norms`]: discrete Sobolev and mixed Bochner norms.
//! * [`forcing`]: seeded trigonometric and named closed-form forcings.

pub mod bogovskii;
pub mod error;
pub mod forcing;
pub mod geometry;
pub mod grid;
pub mod helmholtz;
pub mod norms;
pub mod quadrature;
pub mod stokes;
pub mod transform;

pub use error::{Error, Result};
