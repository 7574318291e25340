//! # graphword
//!
//! Graph-aware whole-word embeddings for generative recommendation.
//!
//! The crate turns an interaction log into leave-last-out splits and a
//! bipartite user-item graph, propagates random features over that graph to
//! obtain one whole-word vector per user and item, and feeds those vectors
//! into a small encoder-decoder transformer that recommends by generating
//! item ids. Around that core sit a training-free reranker, HR/NDCG
//! evaluation, and a numerical check of how whole-word vectors lift the rank
//! of attention matrices.

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod propagation;
pub mod rank_analysis;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod wholeword;

pub use error::{Error, Result};
