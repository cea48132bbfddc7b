//! Single-snapshot sparse array interpolation.
//!
//! Reconstructs the full response of an N-element uniform linear array from
//! a noisy subset of its elements. Two reconstruction paths are provided:
//!
//! * a frequency-attention network ([`net`]) trained on synthetic scenes
//!   ([`train`]), operating on per-frequency-bin tokens ([`tokens`]);
//! * an iterative-hard-thresholding baseline on a Hankel lifting of the
//!   snapshot ([`iht`]).
//!
//! [`eval`] benchmarks both with seeded Monte Carlo SNR sweeps and
//! beamforming spectra; the `fanet` binary drives everything from a flat
//! key-value config file ([`config`]).

pub mod array;
pub mod config;
pub mod error;
pub mod eval;
pub mod iht;
pub mod net;
pub mod rng;
pub mod sparse;
pub(crate) mod svd;
pub mod tokens;
pub mod train;

pub use array::{ArrayGeometry, Snapshot, Span, TargetSet};
pub use error::{Error, Result};
pub use net::{NetConfig, NetDims, NetParams};
pub use sparse::{AugmentConfig, SparseMask};
pub use tokens::{FrequencyGrid, TokenBatch, TokenConfig};
