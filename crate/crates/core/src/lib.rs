//! Data-enabled predictive controllers, their QP solver and a building plant.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only numerics:
//!
//! * [`data`]: time-series containers, normalization and deterministic
//!   signal generators,
//! * [`hankel`]: block Hankel matrices, persistency-of-excitation checks,
//!   pseudo-inverses and row-space projectors,
//! * [`qp`]: a dense convex QP solver (ADMM plus active-set polish),
//! * [`controllers`]: basic, orthogonal-projection, bi-level and
//!   instrumental-variable DeePC plus an ARX reference MPC,
//! * [`plant`]: the third-order single-zone building model used as ground
//!   truth.
//!
//! All controllers work in normalized coordinates; plans are mapped back to
//! physical units through the [`data::Scaler`]s of the identification data.
#![no_std]
#![allow(clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod controllers;
pub mod data;
mod error;
pub mod hankel;
pub mod plant;
pub mod qp;

pub use error::{Error, Result};

/// Dense matrix type used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense column vector type used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
