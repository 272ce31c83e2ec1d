//! Relation classification with a bidirectional LSTM over five sentence
//! parts (before, former entity, middle, latter entity, after).
//!
//! The crate is small enough to read top to bottom:
//!
//! - [`tensor`], [`params`], [`tape`]: dense vectors and a reverse-mode tape.
//! - [`features`]: token embeddings (pretrained, random, character, POS,
//!   WordNet hypernym).
//! - [`encoder`]: the LSTM cell, bidirectional unroll and projection.
//! - [`head`]: segmentation, pooling and the softmax output layer.
//! - [`model`], [`training`], [`checkpoint`]: end-to-end model, AdaGrad
//!   training with early stopping, gradient checks and persistence.
//! - [`data`], [`eval`], [`sdp`]: corpora, scorers and dependency-path
//!   analysis.
//! - [`cli`]: the `relstm` command line.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod head;
pub mod params;
pub mod sdp;
pub mod tape;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
