//! Discrete physics-informed neural network solver for linear elastostatics
//! on domain-decomposed, independently meshed subdomains.
//!
//! Each subdomain carries its own finite-element mesh and coordinate network.
//! Networks predict nodal displacements; the training loss is the total
//! potential energy evaluated by Gauss quadrature. Displacement continuity
//! across nonconforming interfaces is imposed by overwriting slave-node
//! predictions with shape-function interpolants of the master element
//! (no penalty terms), and Dirichlet conditions are imposed exactly.
//! A direct sparse FEM solver with multi-point constraints serves as the
//! reference.

pub mod energy;
pub mod error;
pub mod export;
pub mod fem_oracle;
pub mod interface;
pub mod mesh;
pub mod model;
pub mod presets;
pub mod problem;
pub mod train;

pub use error::{Error, Result};
