//! Toy selective state-space sequence model plus a memory-dynamics
//! laboratory, built for exact, desk-scale analysis.
//!
//! The crate has four parts:
//!
//! * [`model`], [`gates`], [`scan`], [`kernel`] — the model itself: a stack
//!   of diagonal selective SSM layers with input-dependent gates, a
//!   sequential recurrent scan with optional trace capture, and the
//!   unrolled convolution view of the same dynamics.
//! * [`task`] — self-contained structured recall tasks (subject–relation–
//!   object triples with a positional query), distractor variants, and
//!   periodic probe sequences.
//! * [`train`] — cross-entropy loss, hand-derived backpropagation through
//!   the scan, SGD/Adam, and a deterministic training loop.
//! * [`analysis`] — memory coefficients, long-term-memory channel
//!   identification, causal gate ablations, positional-accuracy
//!   evaluation, and delta/kernel statistics on periodic inputs.
//!
//! Everything is `f64`, deterministic under explicit seeds, and free of IO;
//! file formats and plotting live in the companion `ssmlab` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod error;
pub mod gates;
pub mod kernel;
pub mod mat;
pub mod model;
pub mod rng;
pub mod scan;
pub mod task;
pub mod train;

pub use error::{Error, Result};
pub use mat::Mat;
pub use model::{ModelConfig, ModelParams};
pub use scan::{forward, ForwardOptions, GateTrace, HiddenInit};
pub use task::{RecallInstance, RelationMode, TokenId, Vocab};
