//! Deterministic discrete-ordinates solver for the slab-geometry transport
//! equation: diamond-difference sweeps, source iteration, a dense direct
//! solver, analytic oracles and the path-dependent stability rule.

mod mesh;
mod solver;
mod stability;
mod sweep;

pub use mesh::{CoefficientSample, Mesh};
pub use solver::{
    analytic_pure_absorber, direct_solve, solve, source_iteration, SolveOutput, SolveStats,
    SolverChoice,
};
pub use stability::{stability_constants, stable_mesh_width, CouplingPolicy, StabilityParams};
pub use sweep::{
    apply_discrete_k, apply_discrete_k_with_angular, discrete_residual, sweep, AngularFlux,
    ScalarFlux,
};
