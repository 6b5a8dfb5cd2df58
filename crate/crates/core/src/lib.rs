//! Reduced-order and data-driven surrogates for the heat transfer of a pulsed
//! impinging jet.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: dense row-major matrices and a one-sided Jacobi SVD.
//! - [`spectral`]: radix-2 FFT and top-K spectral signatures.
//! - [`pod`]: snapshot POD (basis, truncation, projection, reconstruction).
//! - [`neural`]: MLP, peephole LSTM and encoder-only Transformer with
//!   hand-written gradients, Adam training and early stopping.
//! - [`datagen`]: inlet-velocity laws, an analytic local-Nusselt generator and
//!   the L25 orthogonal-array case planner.
//! - [`pipeline`]: experiment configs, the three end-to-end experiments,
//!   artifact I/O and the `podsurge` CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod error;
pub mod linalg;
pub mod neural;
pub mod pipeline;
pub mod pod;
pub mod spectral;

pub use error::{Error, Result};
