//! Forward, sensitivity and adjoint solvers for optimal control of a
//! four-field tumour model (tumour density φ, lactate σ, viscoelastic
//! displacement u, damage z) on a rectangle, plus the reduced gradient and a
//! projected-gradient optimizer over box and ball constrained drug controls.
//!
//! The crate needs only `alloc`; file formats and the command-line driver
//! live in the companion `tumorctl` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod adjoint;
pub mod cg;
pub mod control;
mod error;
pub mod expr;
pub mod grid;
pub mod linearized;
mod math;
pub mod model;
mod ops;
pub mod scenario;
pub mod state;

pub use error::{Error, Result};
