//! Bit-true logarithmic number system (LNS) arithmetic with
//! quantization-aware piecewise-linear addition tables.
//!
//! A value is stored as a sign bit plus a fixed-point base-2 logarithm of its
//! magnitude. Multiplication is an integer add of the logs; addition needs the
//! correction curves `log2(1 ± 2^-d)`, which are approximated by 16-segment
//! piecewise-linear curves with power-of-two slopes. Those curves are tuned
//! per bitwidth by simulated annealing against a quantized end-to-end loss.
//!
//! Modules:
//! - [`format`], [`scalar`]: representation and scalar arithmetic.
//! - [`delta`]: piecewise-linear correction tables (evaluation, fitting, files).
//! - [`anneal`]: the per-bitwidth table optimizer.
//! - [`nn`]: layers, losses and SGD written once over a numeric [`nn::Arith`].
//! - [`reference`]: exact-correction adder and the double-precision mirror.
//! - [`gradcheck`]: finite-difference checks of the backward passes.
//! - [`dataset`], [`checkpoint`], [`profile`], [`report`]: run plumbing.

pub mod anneal;
pub mod checkpoint;
pub mod dataset;
pub mod delta;
pub mod error;
pub mod format;
pub mod gradcheck;
pub mod nn;
pub mod profile;
pub mod reference;
pub mod report;
pub mod scalar;
pub mod stats;

pub use error::{LnsError, Result};
pub use format::{LnsFormat, ZeroMode};
pub use scalar::LnsScalar;
