//! Deterministic numeric primitives shared by every subsystem: convolution
//! with zero padding on both ends, row normalization, soft/hard attention
//! weights, nearest-token decoding, and vocabulary geometry.

mod filter;
mod matrix;
mod seq;
mod softmax;
mod vocab;

pub use filter::Filter;
pub use matrix::Matrix;
pub use seq::{convolve, row_normalize, row_normalize_with, EmbeddedSeq};
pub use softmax::{attention_weights, AttnMode};
pub use vocab::{gram_schmidt_delta, min_embedding_distance, nearest_token, Vocab};

use thiserror::Error;

/// Norm floor below which a row is considered degenerate.
pub const EPSILON_NORM: f64 = 1e-12;

/// Tolerance used for probability-sum checks and cosine comparisons.
pub const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    /// A row to be normalized has norm below the floor; typically an all-zero
    /// prefix produced by a strictly delaying filter.
    #[error("row {0} has norm below the normalization floor")]
    ZeroRow(usize),
    #[error("vocabulary is empty")]
    EmptyVocab,
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
}
