//! Numerical laboratory for almost-harmonic maps from degenerating hyperbolic
//! collars and flat tori into spheres and flat tori.

// `!(x > 0.0)` is used deliberately so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod target;
pub mod field;
pub mod families;
pub mod analysis;
pub mod experiments;

pub use error::{Error, Result};
