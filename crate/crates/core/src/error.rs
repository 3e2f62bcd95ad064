use thiserror::Error;

/// Every failure mode of the solvers and transforms.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid wave-vector: {0}")]
    InvalidWaveVector(String),

    #[error("{0} requires a two-dimensional torus")]
    RequiresTwoDimensions(String),

    #[error("potential is not admissible: min(1 - lap phi) = {min_density:e} is below the margin {margin:e}")]
    NotAdmissible { min_density: f64, margin: f64 },

    #[error("admissibility lost at step {step}")]
    AdmissibilityLost { step: usize },

    #[error("Newton iteration diverged at continuation parameter s = {s}, residual {residual:e}")]
    NewtonDiverged { s: f64, residual: f64 },

    #[error("continuation step fell below 2^-20 at s = {s}")]
    StepTooSmall { s: f64 },

    #[error("not converged after {sweeps} iterations, residual {residual:e}")]
    NotConverged { sweeps: usize, residual: f64 },

    #[error("free boundary comes within two nodes of a slab cap; enlarge M")]
    FreeBoundaryTouchesSlab,

    #[error("path is not strictly convex in t at node {node}, slice {slice}")]
    NotStrictlyConvexInT { node: usize, slice: usize },

    #[error("slab half-height {m} does not exceed max |d_t Phi| = {slope}")]
    SlabTooSmall { m: f64, slope: f64 },

    #[error("theta is not monotone in z at column {x}, z = {z}")]
    NonMonotoneTheta { x: usize, z: f64 },

    #[error("active set is not contiguous in column {x}")]
    NonContiguousMask { x: usize },

    #[error("vertical derivative of theta vanishes at column {x}")]
    VanishingVerticalDerivative { x: usize },

    #[error("normalization violated: integral of rho is {integral}, expected 1")]
    NotNormalized { integral: f64 },

    #[error("density is not positive: minimum {min}")]
    NotPositive { min: f64 },

    #[error("blow-up at t = {t}")]
    BlowUp { t: f64 },

    #[error("singular matrix: {0}")]
    Singular(String),
}

pub type Result<T> = std::result::Result<T, Error>;
