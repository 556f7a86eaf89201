//! Engine crate for spatio-temporal forecasting with echo-state reservoir
//! ensembles.
//!
//! Everything in here operates on in-memory matrices and is deterministic
//! given a seed: gridded field containers, seeded numerics (spectral radius,
//! ridge, PCA, counter-based RNG streams), sparse random reservoirs, the
//! quadratic-readout shallow ensemble, a stacked deep variant with a
//! spike-and-slab Gibbs readout, kriging and simulator baselines, and
//! probabilistic verification metrics.
//!
//! The crate is `no_std`-compatible (`alloc` required); all float
//! transcendentals route through `libm` so results are identical across
//! std and no_std builds. File formats and the CLI live in the companion
//! `reservoir-cast` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

mod fmath;

pub mod baselines;
pub mod config;
pub mod deep;
pub mod field;
pub mod metrics;
pub mod numerics;
pub mod qeesn;
pub mod reservoir;
pub mod ssvs;
pub mod streams;

pub use nalgebra::{DMatrix, DVector};
