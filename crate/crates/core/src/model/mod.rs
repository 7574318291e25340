//! Encoder-decoder transformer trained from scratch, with whole-word
//! vectors added to the encoder input.

mod attention;
mod checkpoint;
mod config;
mod decode;
mod network;
mod tape;
mod train;

pub use attention::{attention_scores, decompose_attention, AttentionTerms};
pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_to_bytes, load_checkpoint, save_checkpoint,
};
pub use config::ModelConfig;
pub use decode::{beam_search, generate, greedy, Generated, Hypothesis};
pub use network::{relative_bucket, Example, MicroModel, ParamStore, Session};
pub use tape::{log_softmax_rows, Tape, Var};
pub use train::{
    alternating_batches, train, AdamW, EarlyStopper, LossRecord, StopDecision, TaskData,
    TrainBatch, TrainConfig, TrainOutcome,
};
