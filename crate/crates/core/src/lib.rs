//! Convolution-augmented attention (CAT) layers and the machinery to audit them.
//!
//! The crate is organized around six subsystems:
//!
//! * [`numerics`] — filters with explicit support windows, embedded sequences,
//!   row normalization, soft/hard attention weights, and vocabulary geometry.
//! * [`cat`] — the CAT layer forward pass (per-head 1-D convolution and the
//!   head-mixing multi-head convolution), exposing outputs and attention maps.
//! * [`tasks`] — seeded generators and verifiers for associative recall,
//!   N-gram recall, multi-query recall, and selective copying.
//! * [`constructions`] — exact CAT models that solve these tasks, including
//!   the signature-uniqueness precondition and the temperature schedule.
//! * [`audit`] — a loss-landscape auditor for length generalization: measures
//!   worst-case recall error at one length and checks the filter bound, the
//!   golden attention map, and the error-scaling law at other lengths.
//! * [`lcat`] — Landmark CAT: block-summarizing convolution plus two-stage
//!   sparse attention, with full and reduced-form Monte Carlo trial modes.

pub mod audit;
pub mod cat;
pub mod constructions;
pub mod eval;
pub mod lcat;
pub mod numerics;
pub mod seeding;
pub mod tasks;

pub use cat::{CatModel, HeadedSeq, MultiHeadConv};
pub use numerics::{
    attention_weights, convolve, gram_schmidt_delta, min_embedding_distance, nearest_token,
    row_normalize, AttnMode, EmbeddedSeq, Filter, Matrix, NumericsError, Vocab,
};
pub use tasks::{Query, TaskInstance, TaskKind, TaskSuiteSpec};
