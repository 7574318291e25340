use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
    pub timestamp: u64,
}

/// Dense-index ↔ raw-id table, populated in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    raw: Vec<u64>,
    index: HashMap<u64, u32>,
}

impl IdMap {
    pub fn intern(&mut self, raw: u64) -> u32 {
        if let Some(&id) = self.index.get(&raw) {
            return id;
        }
        let id = self.raw.len() as u32;
        self.raw.push(raw);
        self.index.insert(raw, id);
        id
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn raw(&self, dense: u32) -> Option<u64> {
        self.raw.get(dense as usize).copied()
    }

    pub fn dense(&self, raw: u64) -> Option<u32> {
        self.index.get(&raw).copied()
    }

    pub fn raw_ids(&self) -> &[u64] {
        &self.raw
    }

    pub fn from_raw(raw: Vec<u64>) -> Result<Self> {
        let mut map = IdMap::default();
        for r in raw {
            let before = map.len();
            map.intern(r);
            if map.len() == before {
                return Err(Error::Format(format!("duplicate raw id {r}")));
            }
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionLog {
    pub interactions: Vec<Interaction>,
    pub users: IdMap,
    pub items: IdMap,
}

impl InteractionLog {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    /// The id mapping as TSV `kind<TAB>dense<TAB>raw`.
    pub fn id_table_tsv(&self) -> String {
        let mut out = String::new();
        for (kind, map) in [("user", &self.users), ("item", &self.items)] {
            for (dense, raw) in map.raw_ids().iter().enumerate() {
                let _ = writeln!(out, "{kind}\t{dense}\t{raw}");
            }
        }
        out
    }
}

/// Parse `user<TAB>item<TAB>timestamp` lines; `#` comments and blank lines are skipped.
pub fn parse_interactions_str(text: &str) -> Result<InteractionLog> {
    let mut log = InteractionLog::default();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let num = |s: &str, what: &str| -> Result<u64> {
            s.trim().parse::<u64>().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("{what} `{s}` is not a non-negative integer"),
            })
        };
        let user = num(fields[0], "user")?;
        let item = num(fields[1], "item")?;
        let timestamp = num(fields[2], "timestamp")?;
        let user = log.users.intern(user);
        let item = log.items.intern(item);
        log.interactions.push(Interaction {
            user,
            item,
            timestamp,
        });
    }
    Ok(log)
}

pub fn parse_interactions(path: impl AsRef<Path>) -> Result<InteractionLog> {
    let text = std::fs::read_to_string(path)?;
    parse_interactions_str(&text)
}
