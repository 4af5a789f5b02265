//! A from-scratch neural-network micro-framework built around the E-swish
//! activation `f(x) = βx·sigmoid(x)` and its analytic derivative
//! `f'(x) = f(x) + σ(x)(β − f(x))`.
//!
//! The crate provides:
//!
//! - [`numerics`]: a dense row-major `f64` [`Matrix`] and a seeded,
//!   reproducible [`Rng`], plus Glorot uniform initialization.
//! - [`activations`]: E-swish, Swish, ReLU, ELU, Softplus, sigmoid and tanh
//!   as pure scalar maps with analytic derivatives.
//! - [`network`]: dense / batch-norm / dropout / activation layers, full
//!   forward and backward passes, softmax cross-entropy, a finite-difference
//!   gradient checker, and flat binary weight serialization.
//! - [`optim`]: SGD with classical momentum, reduce-on-plateau and milestone
//!   learning-rate schedules, and early stopping.
//! - [`data`]: an MNIST IDX loader (plain or gzip) and a deterministic
//!   synthetic classification dataset for offline runs.
//! - [`experiments`]: the depth-trainability sweep, the 5-layer MNIST MLP,
//!   output-landscape generation with an RMS slope metric, and activation
//!   curve tabulation. All results are emitted as CSV.
//!
//! Everything is deterministic: rerunning any experiment with the same
//! config and seed produces byte-identical output files.
//!
//! See the `examples/` directory for one runnable program per capability,
//! or the `eswish` binary for the same surfaces behind a CLI.

pub mod activations;
pub mod data;
pub mod error;
pub mod experiments;
pub mod network;
pub mod numerics;
pub mod optim;

pub use activations::{ActivationKind, ActivationSpec};
pub use error::{Error, Result};
pub use network::{Batch, LayerSpec, Mode, Network, NetworkSpec};
pub use numerics::{Matrix, Rng};
