//! Compressive delay estimation for sparse translation-invariant signals.
//!
//! Chirp and complex-exponential signal models, random-demodulator sensing,
//! greedy and conic estimators with polar interpolation on the atom manifold,
//! and a Monte Carlo harness.

// Negated float comparisons are used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bench;
pub mod cache;
pub mod conic;
pub mod dictionary;
pub mod error;
pub mod estimators;
pub mod interp;
pub mod sensing;
pub mod signal;

pub use error::{Error, Result};
