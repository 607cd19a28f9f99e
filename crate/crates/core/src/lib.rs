//! driftlab: a numerical laboratory for stable solutions of semilinear
//! equations `Δ_f u + g(u) = 0` on discretized weighted model manifolds.
//!
//! The crate builds weighted model spaces with closed-form curvature,
//! provides a discrete calculus whose gradient/divergence pair is an
//! exact adjoint under the weighted measure, solves the semilinear
//! problem, and audits the spectral, capacity, level-set, and splitting
//! structure that stability forces on such solutions.

pub mod capacity;
pub mod config;
pub mod error;
pub mod field;
pub mod io;
pub mod linalg;
pub mod nonlin;
pub mod profile;
pub mod report;
pub mod rigidity;
pub mod solve;
pub mod space;
pub mod stability;

pub use error::{Error, Result};
pub use field::{
    bochner_residual, drift_laplacian, gradient, hessian, node_gradient, weighted_dirichlet,
    weighted_inner, ScalarField, SymmetricTensorField, VectorField,
};
pub use nonlin::Nonlinearity;
pub use space::{
    boundary_area, weighted_volume, DensityPreset, Exhaustion, Family, ModelSpace, Region,
    SpaceConfig,
};
