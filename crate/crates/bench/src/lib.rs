//! Fixtures shared by the benchmarks.

use fbp_core::data::{potential_from_density_modes, FourierMode};
use fbp_core::{Potential, TorusGrid};

/// Two admissible potentials on a one-dimensional grid of `n` nodes.
pub fn boundary_pair(n: usize) -> (Potential, Potential) {
    let g = TorusGrid::new(1, n).unwrap();
    let make = |modes: &[FourierMode]| Potential::new(potential_from_density_modes(g, modes).unwrap()).unwrap();
    (
        make(&[FourierMode::new(&[1], 0.05, 0.3), FourierMode::new(&[2], 0.05, 1.0)]),
        make(&[FourierMode::new(&[1], 0.05, 2.2), FourierMode::new(&[3], 0.05, 0.7)]),
    )
}
