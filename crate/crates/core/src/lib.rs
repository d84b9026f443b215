//! Preconditioned matrix norms, their linear minimization oracles, and the
//! optimizers built from them.

pub mod decomp;
pub mod error;
pub mod geometry;
pub mod invariance;
pub mod matrix;
pub mod objective;
pub mod optim;
pub mod par;
pub mod polar;
pub mod tasks;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;
