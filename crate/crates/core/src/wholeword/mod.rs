//! ID tokenization, task prompts and whole-word embedding lookup.
//!
//! IDs such as `user_1234` are split into a prefix, `_`, and two-digit
//! chunks, so thousands of entities share ~110 digit subwords. A whole-word
//! vector shared by every token of one ID restores per-entity identity; the
//! schemes here decide where that vector comes from.

mod prompt;
mod scheme;
mod vocab;

pub use prompt::{
    build_direct_prompt, build_explanation_prompt, build_sequential_prompt, Span, TokenizedPrompt,
};
pub use scheme::{lookup_wholeword, IncrementalTable, SchemeMode, WholeWordScheme};
pub use vocab::{detokenize_id, tokenize_id, Entity, Task, Vocab, PROMPT_LEN};
