//! Partial-boundary electrical impedance tomography on the unit disk.
//!
//! The crate covers the whole chain from simulated electrode measurements to
//! reconstructed conductivities:
//!
//! - [`geometry`]: disk meshes, electrode layouts and the boundary quadrature grid.
//! - [`boundary`]: trigonometric basis and the electrode operators `Q`, `P`, `L`.
//! - [`forward`]: finite element solvers for the continuum, electrode-continuum
//!   and complete electrode models, plus dataset simulation.
//! - [`ndmap`]: Neumann-to-Dirichlet matrices and the vectorized `Ψ` system.
//! - [`completion`]: trace recovery and the regularized full-boundary approximation.
//! - [`dbar`]: scattering transform and D-bar reconstruction.
//! - [`phantoms`]: conductivity phantoms and error metrics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod completion;
pub mod dbar;
mod error;
pub mod forward;
pub mod geometry;
pub mod linalg;
pub mod ndmap;
pub mod phantoms;

pub use error::{Error, Result};
