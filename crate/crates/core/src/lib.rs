//! Fiber-longitudinal power profile estimation.
//!
//! The crate simulates multi-span fiber links with a split-step solver and
//! recovers the position-wise nonlinear coefficient γ(z)P(z) from the
//! transmitted and received waveforms by linear least squares on a
//! first-order perturbation model. Conditioning, resolution and anomaly
//! analysis live in [`analysis`].
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`.

// `!(a <= b)` is used where NaN must count as failing the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod estimator;
pub mod iq;
pub mod linalg;
pub mod pipeline;
pub mod link;
pub mod propagation;
pub mod rng;
pub mod scalar;
pub mod signal;
pub mod sim;
pub mod units;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Field = signal::ComplexField<f64>;
pub type DualField = signal::DualPolField<f64>;
pub type AnySignal = signal::Signal<f64>;
pub type SiLink = link::Link<f64>;
pub type Cd = propagation::CdOperator<f64>;
