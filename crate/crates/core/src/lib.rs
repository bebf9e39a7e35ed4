//! Lifetime of a replicated file in a data-center network whose centers fail
//! and join at random.
//!
//! Three models are provided: the stationary law of the network size
//! ([`stationary`]), an approximate phase-type lifetime built on corrected
//! copy rates ([`approx_ph`]), and the exact two-dimensional QBD solved by
//! block RG-factorization ([`qbd`]). [`montecarlo`] simulates both chains
//! directly and serves as an independent oracle.

pub mod approx_ph;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod qbd;
pub mod stationary;

pub use error::{Error, Result};
pub use model::{validate_params, LifetimeReport, Method, ModelParams};
