//! Compressible primitive equations with gravity, their low-Mach limit, and
//! the diagnostics used to compare the two.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cpe;
pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod harness;
pub mod hydrostatics;
pub mod ipe;

pub use error::{Error, Result};
