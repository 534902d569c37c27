//! Hybrid HMM-LSTM sequence models.
//!
//! * [`corpus`]: symbol tables, discretization, splits, batching.
//! * [`hmm`]: hidden Markov model with Gibbs (FFBS) training.
//! * [`nncore`]: single-layer LSTM language model with hand-derived BPTT.
//! * [`hybrid`]: sequential and joint HMM-LSTM hybrids.
//! * [`interpret`]: k-means over hidden states, surrogate trees, colored text.
//! * [`synth`]: generated corpora with planted structure.

pub mod corpus;
pub mod error;
pub mod hmm;
pub mod hybrid;
pub mod interpret;
pub mod matrix;
pub mod nncore;
pub mod synth;
pub mod task;

pub use error::{Error, Result};
pub use matrix::Matrix;
