//! Plane-stress simulation and gradient-based shape optimization of two-part
//! piecewise-linear joints.
//!
//! The crate is organized around a forward pipeline and its derivative:
//!
//! - [`geometry`]: parametric joint families and the polygonal boundaries of
//!   both halves, with tagged contact edges.
//! - [`mesh`]: deterministic triangulation of each half and a differentiable
//!   morph from shape parameters to node coordinates.
//! - [`fem`]: plane-stress linear elasticity on triangle meshes (energy,
//!   residual, tangent, boundary conditions).
//! - [`contact`]: the penalized potential energy and the alternating
//!   two-side solve.
//! - [`adjoint`]: reverse-mode gradients of the solve output with respect to
//!   mesh coordinates and shape parameters, plus finite-difference checks.
//! - [`optim`]: the regularized objective, strong-Wolfe line search, and the
//!   gradient-descent driver.

pub mod adjoint;
pub mod contact;
pub mod fem;
pub mod geometry;
pub mod mesh;
pub mod optim;
pub mod rng;
pub mod sparse;

mod vec2;

/// Library version string.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
