//! Numerical laboratory for the ε-Laplacian free boundary problem on a flat
//! torus, in its three equivalent formulations:
//!
//! * the temperature function θ on a slab bounded by two free graphs,
//! * the degenerate Monge–Ampère type equation `q(Φ) = ε` for a path of
//!   potentials Φ in the space ℋ,
//! * the obstacle problem for `U ≥ L`.
//!
//! The crate also covers the Riemannian geometry of ℋ ([`space_h`]) and the
//! finite-dimensional Nahm equations with their symmetric-space variational
//! formulation ([`nahm`]).

pub mod banded;
pub mod data;
pub mod error;
pub mod grid;
pub mod nahm;
pub mod obstacle;
pub mod phi_solver;
pub mod space_h;
pub mod transforms;

#[cfg(test)]
mod proptests;

pub use error::{Error, Result};
pub use grid::{FourierKind, ScalarField, TorusGrid, VectorFieldOnX};
pub use nahm::{HermitianPath, NahmState};
pub use obstacle::{ObstacleProblem, SlabField, SlabGrid};
pub use phi_solver::{NewtonOptions, PhiProblem, SymMatrix};
pub use space_h::{PathInH, Potential, TrajectoryState};
pub use transforms::LevelSetFamily;
