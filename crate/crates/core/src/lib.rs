//! Analytic model and Monte Carlo simulation of continuous-wave two-photon
//! interference between photons of a single dephasing emitter, separated by
//! an unbalanced Michelson delay.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod coherence;
pub mod config;
pub mod detection;
pub mod emitter;
pub mod error;
pub mod histogram;
pub mod interferometer;
pub mod io;
pub mod optimize;
pub mod pipeline;
pub mod rng;
pub mod selftest;

pub use error::{Error, Result};
