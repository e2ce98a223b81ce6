//! Robust regression of tensor-valued responses on vector predictors.
//!
//! Errors are modelled by the tensor t distribution `TT(0, Ξ, ν)` whose scale
//! `Ξ = {Σ_1, …, Σ_M}` is Kronecker separable. The crate provides the tensor
//! algebra, the distribution itself, separable scale estimation, the
//! penalized estimators (OLS, APL, APN, APT, OST, HOST and group variants),
//! Wald inference and a reproducible simulation harness.

pub mod covariance;
pub mod distributions;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod io;
pub mod par;
pub mod simbench;
pub mod tensor;

mod linalg;

pub use error::{Error, Result};
