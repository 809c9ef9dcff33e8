//! Inertial Langevin dynamics on compact Riemannian manifolds, written on the
//! orthonormal frame bundle, together with the zero-mass limiting equation and
//! its noise-induced drift.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod drift;
pub mod engine;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod harness;
pub mod linalg;

pub use error::{Error, Result};
