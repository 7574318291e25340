//! Synthetic block-structured interaction corpus.
//!
//! Users and items are split into equal-sized blocks. Each user walks a
//! fixed cyclic order of its block's items, sometimes jumping to a random
//! in-block item and occasionally to an item of another block. User and
//! item ids are shuffled and rows are interleaved across users, so block
//! membership cannot be read off ids or first-appearance order.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub blocks: usize,
    pub users: usize,
    pub items: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Probability of stepping to the next item of the block cycle.
    pub p_cycle: f64,
    /// Probability of jumping to an item of another block.
    pub p_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            blocks: 4,
            users: 200,
            items: 100,
            min_len: 6,
            max_len: 10,
            p_cycle: 0.7,
            p_noise: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    /// `(user, item, timestamp)` rows in file order, sorted by timestamp.
    pub rows: Vec<(u32, u32, u64)>,
    /// Block of each user id.
    pub user_block: Vec<usize>,
    pub item_block: Vec<usize>,
}

impl SynthCorpus {
    /// Interaction log as `user<TAB>item<TAB>timestamp` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (u, i, t) in &self.rows {
            let _ = writeln!(out, "{u}\t{i}\t{t}");
        }
        out
    }
}

pub fn synth_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    if cfg.blocks == 0 || cfg.users < cfg.blocks || cfg.items < cfg.blocks {
        return Err(Error::invalid(
            "need at least one user and one item per block",
        ));
    }
    if cfg.min_len < 3 || cfg.max_len < cfg.min_len {
        return Err(Error::invalid("need 3 <= min_len <= max_len"));
    }
    if cfg.max_len > cfg.items / cfg.blocks {
        return Err(Error::invalid(
            "max_len exceeds the block size; sequences must not repeat items",
        ));
    }
    if !(0.0..=1.0).contains(&(cfg.p_cycle + cfg.p_noise)) || cfg.p_cycle < 0.0 || cfg.p_noise < 0.0
    {
        return Err(Error::invalid("p_cycle + p_noise must lie in [0, 1]"));
    }
    let mut r = rng::stream(cfg.seed, "synth");
    let mut ids: Vec<u32> = (0..cfg.items as u32).collect();
    ids.shuffle(&mut r);
    let mut item_block = vec![0; cfg.items];
    let mut cycles: Vec<Vec<u32>> = vec![Vec::new(); cfg.blocks];
    for (pos, &id) in ids.iter().enumerate() {
        let b = pos * cfg.blocks / cfg.items;
        item_block[id as usize] = b;
        cycles[b].push(id);
    }
    let mut user_ids: Vec<u32> = (0..cfg.users as u32).collect();
    user_ids.shuffle(&mut r);
    let mut user_block = vec![0; cfg.users];
    let mut seqs = Vec::with_capacity(cfg.users);
    for (pos, &u) in user_ids.iter().enumerate() {
        let b = pos * cfg.blocks / cfg.users;
        user_block[u as usize] = b;
        let cycle = &cycles[b];
        let len = r.random_range(cfg.min_len..=cfg.max_len);
        let mut pos = r.random_range(0..cycle.len());
        let mut seq = vec![cycle[pos]];
        while seq.len() < len {
            let x: f64 = r.random();
            let next = if x < cfg.p_cycle {
                pos = (pos + 1) % cycle.len();
                cycle[pos]
            } else if x < cfg.p_cycle + cfg.p_noise {
                let other = r.random_range(0..cfg.items) as u32;
                if item_block[other as usize] == b {
                    continue;
                }
                other
            } else {
                pos = r.random_range(0..cycle.len());
                cycle[pos]
            };
            if !seq.contains(&next) {
                seq.push(next);
            }
        }
        seqs.push((u, seq));
    }
    seqs.shuffle(&mut r);
    // round-robin over users: step t of the k-th user gets timestamp t·users + k
    let mut rows = Vec::new();
    for t in 0..cfg.max_len {
        for (k, (u, seq)) in seqs.iter().enumerate() {
            if let Some(&i) = seq.get(t) {
                rows.push((*u, i, (t * cfg.users + k) as u64));
            }
        }
    }
    Ok(SynthCorpus {
        rows,
        user_block,
        item_block,
    })
}
