//! Numerical laboratory for square functions on manifolds with ends.
//!
//! The crate evaluates Bessel potential kernels and torus-end resolvent kernels,
//! builds a finite-volume radial model of a manifold with ends of different
//! asymptotic dimension, and computes vertical and horizontal square functions
//! by k-quadrature over exact resolvent solves. Envelope-level Schur tests and
//! the high-energy Fourier split live alongside, and [`experiments`] ties the
//! pieces into reproducible runs.

pub mod bessel;
pub mod end_kernels;
pub mod error;
pub mod experiments;
pub mod highenergy;
pub mod quadrature;
pub mod radial_model;
pub mod schur_verifier;
pub mod solver;
pub mod sqfn_engine;
pub mod stats;

pub use error::{Error, Result};
