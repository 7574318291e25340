use std::cmp::Ordering;

use super::network::MicroModel;
use crate::error::{Error, Result};
use crate::eval::RankedList;
use crate::wholeword::{Entity, TokenizedPrompt, Vocab, WholeWordScheme};

/// A decoded token sequence (without `</s>`).
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    /// Sum of token log-probabilities, `</s>` included when emitted.
    pub log_prob: f64,
    /// `log_prob` divided by the number of scored tokens.
    pub score: f64,
}

/// Length-normalized beam search. A hypothesis ends when `</s>` ranks
/// among the top `beams` continuations; search stops once `beams`
/// hypotheses have ended or `max_len` tokens were produced.
pub fn beam_search(
    model: &MicroModel,
    prompt: &TokenizedPrompt,
    scheme: &WholeWordScheme,
    beams: usize,
    max_len: usize,
) -> Result<Vec<Hypothesis>> {
    if beams == 0 {
        return Err(Error::invalid("beams must be >= 1"));
    }
    let mut session = model.session(prompt, scheme)?;
    let mut alive: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), 0.0)];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for step in 0..max_len {
        let mut cands: Vec<(usize, u32, f64)> = Vec::with_capacity(alive.len() * model.vocab.len());
        for (b, (tokens, cum)) in alive.iter().enumerate() {
            for (t, lp) in session.next_log_probs(tokens).into_iter().enumerate() {
                cands.push((b, t as u32, cum + lp));
            }
        }
        cands.sort_by(|x, y| {
            y.2.partial_cmp(&x.2)
                .unwrap_or(Ordering::Equal)
                .then(x.0.cmp(&y.0))
                .then(x.1.cmp(&y.1))
        });
        let mut next = Vec::with_capacity(beams);
        for (rank, &(b, t, cum)) in cands.iter().take(2 * beams).enumerate() {
            let tokens = &alive[b].0;
            if t == Vocab::EOS {
                if rank < beams {
                    let len = (tokens.len() + 1) as f64;
                    finished.push(Hypothesis {
                        tokens: tokens.clone(),
                        log_prob: cum,
                        score: cum / len,
                    });
                }
            } else {
                let mut ext = tokens.clone();
                ext.push(t);
                next.push((ext, cum));
                if next.len() == beams {
                    break;
                }
            }
        }
        if finished.len() >= beams {
            break;
        }
        alive = next;
        if step + 1 == max_len {
            for (tokens, cum) in alive.drain(..) {
                let len = tokens.len() as f64;
                finished.push(Hypothesis {
                    tokens,
                    log_prob: cum,
                    score: cum / len,
                });
            }
        }
    }
    finished.sort_by(|x, y| {
        y.score
            .partial_cmp(&x.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| x.tokens.cmp(&y.tokens))
    });
    finished.truncate(beams);
    Ok(finished)
}

/// Argmax decoding until `</s>` or `max_len` tokens.
pub fn greedy(
    model: &MicroModel,
    prompt: &TokenizedPrompt,
    scheme: &WholeWordScheme,
    max_len: usize,
) -> Result<Hypothesis> {
    let mut session = model.session(prompt, scheme)?;
    let mut tokens = Vec::new();
    let mut cum = 0.0;
    for _ in 0..max_len {
        let lp = session.next_log_probs(&tokens);
        let (best, &v) = lp
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |acc, (i, v)| {
                if *v > *acc.1 {
                    (i, v)
                } else {
                    acc
                }
            });
        cum += v;
        if best as u32 == Vocab::EOS {
            let len = (tokens.len() + 1) as f64;
            return Ok(Hypothesis {
                tokens,
                log_prob: cum,
                score: cum / len,
            });
        }
        tokens.push(best as u32);
    }
    let len = tokens.len() as f64;
    Ok(Hypothesis {
        tokens,
        log_prob: cum,
        score: cum / len,
    })
}

/// Generated items and the number of beams that did not parse as an item id.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub list: RankedList,
    pub dropped: usize,
}

/// Beam search whose outputs are parsed back into item ids.
pub fn generate(
    model: &MicroModel,
    prompt: &TokenizedPrompt,
    scheme: &WholeWordScheme,
    beams: usize,
    max_len: usize,
) -> Result<Generated> {
    let hyps = beam_search(model, prompt, scheme, beams, max_len)?;
    let mut scored = Vec::with_capacity(hyps.len());
    let mut dropped = 0;
    for h in hyps {
        match model.vocab.decode_id(&h.tokens) {
            Some(Entity::Item(i)) => scored.push((i, h.score)),
            _ => dropped += 1,
        }
    }
    if scored.is_empty() {
        return Err(Error::EmptyOutput);
    }
    Ok(Generated {
        list: RankedList::from_scores(scored),
        dropped,
    })
}
