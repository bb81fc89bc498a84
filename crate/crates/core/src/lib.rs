//! Lagrangian data assimilation of sea-ice floe trajectories.
//!
//! A stochastic spectral ocean drives free-drifting floes on the periodic
//! square `[0, 2π)²`. Noisy floe positions are assimilated with an ensemble
//! transform Kalman filter, either over the whole domain or independently
//! per subdomain with Gaussian partition-of-unity fusion of the recovered
//! velocity fields.
//!
//! The numerical modules are generic over [`scalar::Real`] (`f32` or `f64`);
//! the experiment harness runs in `f64` and the aliases below name the
//! concrete types it uses.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupled;
pub mod decomposition;
pub mod error;
pub mod etkf;
pub mod experiment;
pub mod field;
pub mod floe;
pub mod io;
pub mod metrics;
pub mod ocean;
pub mod scalar;
pub mod seeds;
pub mod torus;

pub use error::{Error, Result};
pub use scalar::{Real, Vec2};

pub type Ensemble64 = etkf::Ensemble<f64>;
pub type FieldGrid64 = field::FieldGrid<f64>;
pub type Floe64 = floe::Floe<f64>;
pub type ModeSet64 = ocean::ModeSet<f64>;
pub type ModeState64 = ocean::ModeState<f64>;
pub type ModeParams64 = ocean::ModeParams<f64>;
