//! Discrete-ordinates solver for the 1D slab-geometry radiative transport
//! equation with heterogeneous (lognormal) cross-sections, plus standard and
//! multilevel Monte Carlo estimators for flux functionals.
//!
//! The crate is organised around the pipeline
//!
//! ```text
//! randfield  ->  transport  ->  estimators  ->  harness
//!     |             |
//!  specfun      quadrature
//! ```
//!
//! * [`quadrature`] builds the double Gauss angular rule used by the
//!   discrete-ordinates scheme.
//! * [`specfun`] provides exponential integrals and Matern kernels used by
//!   analytic oracles and the random-field sampler.
//! * [`transport`] holds the deterministic solver: diamond-difference sweeps,
//!   source iteration, a dense direct solver and the stability machinery.
//! * [`randfield`] samples lognormal scattering cross-sections through a
//!   Karhunen-Loeve expansion (analytic for the exponential kernel, Nystrom
//!   otherwise).
//! * [`estimators`] implements quantities of interest and the MC / MLMC
//!   drivers with work accounting and rate fits.
//! * [`harness`] is the CLI layer: config files, experiment drivers and CSV
//!   emission.

pub mod error;
pub mod estimators;
pub mod harness;
pub(crate) mod linalg;
pub mod quadrature;
pub mod randfield;
pub mod rng;
pub mod specfun;
pub mod transport;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
