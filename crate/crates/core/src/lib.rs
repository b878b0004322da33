//! Discrete variational machinery for fractional-Laplacian problems on truncated
//! domains: the Gagliardo form, quotient maximization and its eigenvalue, the
//! Moser norm ladder, and the two-parameter critical point search.
//!
//! Everything numerical is generic over [`Real`] (`f32`/`f64`); the exponent
//! schedule of the regularity ladder also runs in exact rational arithmetic.
//! The `*64` aliases below fix the scalar to `f64`.

pub mod domain;
pub mod eigensolver;
pub mod error;
pub mod functionals;
pub mod lemma_oracles;
pub mod linalg;
pub mod multiparam;
pub mod nonlocal_form;
pub mod regularity;
pub mod scalar;

pub use domain::{build_grid, critical_exponent, lp_norm, FracParams, Grid, GridFunction};
pub use error::{Error, Result};
pub use scalar::Real;

pub type Grid64 = Grid<f64>;
pub type GridFunction64 = GridFunction<f64>;
pub type FracParams64 = FracParams<f64>;
pub type Kernel64 = nonlocal_form::Kernel<f64>;
pub type BilinearForm64 = nonlocal_form::BilinearForm<f64>;
pub type Weight64 = functionals::Weight<f64>;
pub type Nonlinearity64 = functionals::Nonlinearity<f64>;
pub type EigenPair64 = eigensolver::EigenPair<f64>;
