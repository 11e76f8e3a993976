//! Gaussian deconvolution on Z^d.
//!
//! Given a symmetric kernel `F` with an infrared bound and a power-law tail,
//! the solution of `F * G = delta` is compared against `lambda C_mu`, where
//! `C_mu` is the lattice Green function of the simple random walk killed at
//! rate `1 - mu`. The crate computes every ingredient numerically on finite
//! boxes and torus grids and checks the predicted decay and smoothness
//! properties.

pub mod deconv;
pub mod error;
pub mod fracdiff;
pub mod green;
pub mod lattice;
pub mod models;
pub mod numerics;
pub mod orbit;
pub mod spectral;
pub(crate) mod symtrans;

pub use error::{Error, Result};
