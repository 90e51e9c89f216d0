//! Nonlocal Schrödinger operators with drift, `(-Δ)^s + b·∇ + c`, on uniform
//! grids: forward solves, Dirichlet-to-Neumann maps, quantitative Runge
//! approximation and pointwise coefficient reconstruction from finitely many
//! measurements.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
extern crate alloc;

pub mod dnmap;
pub mod domain;
pub mod error;
pub mod fft;
pub mod fraclap;
pub mod quad;
pub mod reconstruct;
pub mod runge;
pub mod solver;
pub mod studies;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
