#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod kernels;
pub mod mc;
pub mod potentials;
pub mod quadrature;
pub mod specfun;
pub mod surface_mc;
pub mod verify;

pub use error::{Error, Result};
