//! Polyhomogeneous expansions `u ~ Σ c_{i,j} x^i (log x)^j` of a cusp-type
//! model equation near a divisor.
//!
//! The crate computes the expansion term by term with an exact series
//! recursion ([`formal`]) and cross-checks it against an independent numerical
//! solution built from the per-eigenmode variation-of-parameters formula
//! ([`modeode`]).

pub mod error;
pub mod formal;
pub mod harness;
pub mod indices;
pub mod modeode;
pub mod series;
pub mod spectral;

pub use error::{Error, Result};
