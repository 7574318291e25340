use std::fmt::Write as _;

use super::vocab::{Entity, Task, Vocab, PROMPT_LEN};
use crate::error::{Error, Result};

/// Whole-word label of one token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub entity: Option<Entity>,
    /// Appearance order of the entity in the prompt, 0 for the user.
    pub appearance: Option<u32>,
}

impl Span {
    pub const NONE: Span = Span {
        entity: None,
        appearance: None,
    };

    pub fn is_id(&self) -> bool {
        self.entity.is_some()
    }
}

/// Encoder input: prompt slots, ID subwords, and a closing `</s>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedPrompt {
    pub task: Task,
    pub tokens: Vec<u32>,
    pub spans: Vec<Span>,
}

impl TokenizedPrompt {
    fn start(task: Task, vocab: &Vocab) -> Self {
        let tokens: Vec<u32> = (0..PROMPT_LEN)
            .map(|s| vocab.prompt_slot(task, s))
            .collect();
        let spans = vec![Span::NONE; tokens.len()];
        Self {
            task,
            tokens,
            spans,
        }
    }

    fn push_entity(&mut self, vocab: &Vocab, entity: Entity, appearance: u32) {
        let ids = vocab.encode_id(entity);
        let span = Span {
            entity: Some(entity),
            appearance: Some(appearance),
        };
        self.spans.extend(std::iter::repeat_n(span, ids.len()));
        self.tokens.extend(ids);
    }

    fn finish(mut self) -> Self {
        self.tokens.push(Vocab::EOS);
        self.spans.push(Span::NONE);
        self
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of contiguous whole-word spans.
    pub fn span_count(&self) -> usize {
        let mut count = 0;
        let mut prev: Option<Span> = None;
        for s in &self.spans {
            if s.is_id() && prev != Some(*s) {
                count += 1;
            }
            prev = Some(*s);
        }
        count
    }

    pub fn max_appearance(&self) -> Option<u32> {
        self.spans.iter().filter_map(|s| s.appearance).max()
    }

    /// Debug dump: `tok/span` pairs, `-` for non-ID tokens.
    pub fn dump(&self, vocab: &Vocab) -> String {
        let mut out = String::new();
        for (i, (&t, s)) in self.tokens.iter().zip(&self.spans).enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(vocab.token(t));
            out.push('/');
            match (s.entity, s.appearance) {
                (Some(Entity::User(u)), Some(a)) => {
                    let _ = write!(out, "u{u}#{a}");
                }
                (Some(Entity::Item(v)), Some(a)) => {
                    let _ = write!(out, "i{v}#{a}");
                }
                _ => out.push('-'),
            }
        }
        out
    }
}

/// `<P1> user_u item_c1 … item_cn </s>`.
pub fn build_direct_prompt(
    vocab: &Vocab,
    user: u32,
    candidates: &[u32],
) -> Result<TokenizedPrompt> {
    if candidates.is_empty() {
        return Err(Error::invalid("direct prompt needs at least one candidate"));
    }
    let mut p = TokenizedPrompt::start(Task::Direct, vocab);
    p.push_entity(vocab, Entity::User(user), 0);
    for (i, &c) in candidates.iter().enumerate() {
        p.push_entity(vocab, Entity::Item(c), i as u32 + 1);
    }
    Ok(p.finish())
}

/// `<P2> user_u item_h1 … item_hN </s>` with appearance indices `#0 … #N`.
pub fn build_sequential_prompt(
    vocab: &Vocab,
    user: u32,
    history: &[u32],
) -> Result<TokenizedPrompt> {
    if history.is_empty() {
        return Err(Error::invalid(
            "sequential prompt needs a non-empty history",
        ));
    }
    let mut p = TokenizedPrompt::start(Task::Sequential, vocab);
    p.push_entity(vocab, Entity::User(user), 0);
    for (i, &h) in history.iter().enumerate() {
        p.push_entity(vocab, Entity::Item(h), i as u32 + 1);
    }
    Ok(p.finish())
}

/// `<P3> user_u item_v </s>`.
pub fn build_explanation_prompt(vocab: &Vocab, user: u32, item: u32) -> TokenizedPrompt {
    let mut p = TokenizedPrompt::start(Task::Explanation, vocab);
    p.push_entity(vocab, Entity::User(user), 0);
    p.push_entity(vocab, Entity::Item(item), 1);
    p.finish()
}
