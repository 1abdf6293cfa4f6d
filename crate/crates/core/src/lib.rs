//! Pseudo-spectral simulation of the hydrostatic primitive equations on a
//! periodic ocean layer, linearized and nonlinear, around the finite-depth
//! Ekman spiral.
//!
//! Module map:
//! - [`model`]: physical parameters, Ekman spiral coefficients, `C_E`
//! - [`grid`], [`field`]: Fourier x Chebyshev discretization
//! - [`hydrostatics`]: averaging, projection, `w(v)`, pressure
//! - [`operator`]: the linearized operator, bilinear term, spectral bound
//! - [`solver`]: CNAB2 time stepping of the difference system
//! - [`diagnostics`]: norm records, decay fits, inequality monitors
//! - [`config`], [`io`]: configuration files, snapshots, CSV, manifests

pub mod config;
pub mod diagnostics;
pub mod field;
pub mod grid;
pub mod hydrostatics;
pub mod io;
pub mod model;
pub mod operator;
pub mod solver;

pub use field::{Axis, Field, LpNorm, Repr, ScalarField};
pub use grid::Grid;
pub use model::{EkmanSolution, PhysicalParams, Smallness};
