//! A small laboratory for studying how positional encodings affect length
//! generalization in decoder-only transformers.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: dense tensors, a reverse-mode tape, Adam, gradient checks
//!   and the checkpoint format.
//! * [`posenc`]: NoPE, sinusoidal APE, T5 relative bias, ALiBi and rotary.
//! * [`model`]: the causal transformer with attention capture and greedy
//!   decoding.
//! * [`tasks`] and [`scratchpad`]: seeded algorithmic task generators and
//!   step-by-step trace rendering.
//! * [`harness`]: vocabulary, encoding, training and exact-match evaluation.
//! * [`analysis`]: attention-distance metrics and mean-rank aggregation.
//! * [`theorems`]: explicit weight constructions showing that a NoPE model
//!   can recover absolute and relative positions, checked numerically.

pub mod analysis;
pub mod error;
pub mod harness;
pub mod model;
pub mod numerics;
pub mod posenc;
pub mod scratchpad;
pub mod tasks;
pub mod theorems;

pub use error::{Error, Result};
