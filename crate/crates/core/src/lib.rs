//! Input-output convex neural networks (IOC-NNs).
//!
//! A feed-forward network is convex in its input when every layer after the
//! first has non-negative weights and every hidden activation is convex and
//! non-decreasing. This crate provides the layer stack, the weight
//! projections that enforce the sign constraints during training, empirical
//! convexity certification, mixture-of-experts and boosted ensembles of
//! convex networks, and calibration metrics.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`, which every experiment uses.

// `!(x >= 0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constraints;
pub mod data;
pub mod ensemble;
pub mod metrics;
mod error;
pub mod net;
pub mod train;
pub mod verify;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision network.
pub type Model = net::Network<f64>;
/// Single-precision network.
pub type ModelF32 = net::Network<f32>;
pub type Batch = net::Batch<f64>;
pub type Gradients = net::Gradients<f64>;
