use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::parse::InteractionLog;
use crate::error::{Error, Result};
use crate::rng;

/// One user's leave-last-out partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserSplit {
    pub user: u32,
    pub train: Vec<u32>,
    pub val: u32,
    pub test: u32,
    /// Direct-recommendation candidates (test label plus negatives); empty until sampled.
    pub candidates: Vec<u32>,
}

impl UserSplit {
    /// Every item the user interacted with, including both held-out labels.
    pub fn interacted(&self) -> HashSet<u32> {
        let mut set: HashSet<u32> = self.train.iter().copied().collect();
        set.insert(self.val);
        set.insert(self.test);
        set
    }

    /// Items known at test time: training items plus the validation label.
    pub fn known_at_test(&self) -> HashSet<u32> {
        let mut set: HashSet<u32> = self.train.iter().copied().collect();
        set.insert(self.val);
        set
    }

    pub fn full_sequence(&self) -> Vec<u32> {
        let mut seq = self.train.clone();
        seq.push(self.val);
        seq.push(self.test);
        seq
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitDataset {
    pub num_users: usize,
    pub num_items: usize,
    pub users: Vec<UserSplit>,
}

impl SplitDataset {
    pub fn max_train_len(&self) -> usize {
        self.users.iter().map(|u| u.train.len()).max().unwrap_or(0)
    }
}

/// Chronological leave-last-out split. Users with fewer than `min_len`
/// interactions are dropped; timestamp ties keep file order.
pub fn make_splits(log: &InteractionLog, min_len: usize) -> Result<SplitDataset> {
    if min_len < 3 {
        return Err(Error::invalid("min_len must be at least 3"));
    }
    let mut per_user: Vec<Vec<(u64, usize, u32)>> = vec![Vec::new(); log.num_users()];
    for (pos, it) in log.interactions.iter().enumerate() {
        per_user[it.user as usize].push((it.timestamp, pos, it.item));
    }
    let mut users = Vec::new();
    for (user, mut events) in per_user.into_iter().enumerate() {
        if events.len() < min_len {
            continue;
        }
        events.sort_by_key(|&(ts, pos, _)| (ts, pos));
        let mut items: Vec<u32> = events.into_iter().map(|(_, _, item)| item).collect();
        let test = items.pop().expect("len >= 3");
        let val = items.pop().expect("len >= 3");
        users.push(UserSplit {
            user: user as u32,
            train: items,
            val,
            test,
            candidates: Vec::new(),
        });
    }
    if users.is_empty() {
        return Err(Error::EmptyDataset { min_len });
    }
    Ok(SplitDataset {
        num_users: log.num_users(),
        num_items: log.num_items(),
        users,
    })
}

/// Uniform draws without replacement from items outside `exclude`.
pub fn sample_negatives<R: Rng + ?Sized>(
    rng: &mut R,
    num_items: usize,
    exclude: &HashSet<u32>,
    count: usize,
    user: u32,
) -> Result<Vec<u32>> {
    let pool: Vec<u32> = (0..num_items as u32)
        .filter(|i| !exclude.contains(i))
        .collect();
    if pool.len() < count {
        return Err(Error::InsufficientNegatives {
            user,
            available: pool.len(),
            needed: count,
        });
    }
    Ok(index::sample(rng, pool.len(), count)
        .into_iter()
        .map(|i| pool[i])
        .collect())
}

/// Attach `num_neg` negatives plus the test label to every user, shuffled.
pub fn sample_direct_candidates(
    mut splits: SplitDataset,
    num_neg: usize,
    seed: u64,
) -> Result<SplitDataset> {
    let mut rng = rng::stream(seed, rng::NEGATIVES);
    for u in &mut splits.users {
        let mut cands =
            sample_negatives(&mut rng, splits.num_items, &u.interacted(), num_neg, u.user)?;
        cands.push(u.test);
        cands.shuffle(&mut rng);
        u.candidates = cands;
    }
    Ok(splits)
}

/// Split manifest as TSV `user<TAB>role<TAB>item`, roles `train`, `val`, `test`, `cand`.
pub fn write_split_manifest(splits: &SplitDataset) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# users={} items={}",
        splits.num_users, splits.num_items
    );
    for u in &splits.users {
        for item in &u.train {
            let _ = writeln!(out, "{}\ttrain\t{item}", u.user);
        }
        let _ = writeln!(out, "{}\tval\t{}", u.user, u.val);
        let _ = writeln!(out, "{}\ttest\t{}", u.user, u.test);
        for item in &u.candidates {
            let _ = writeln!(out, "{}\tcand\t{item}", u.user);
        }
    }
    out
}

pub fn read_split_manifest(text: &str) -> Result<SplitDataset> {
    let mut lines = text.lines().enumerate();
    let (num_users, num_items) = match lines.next() {
        Some((_, header)) => parse_header(header)?,
        None => return Err(Error::Format("empty split manifest".into())),
    };
    let mut users: Vec<UserSplit> = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Parse {
            line: idx + 1,
            msg: msg.to_string(),
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(bad("expected user<TAB>role<TAB>item"));
        }
        let user: u32 = f[0].parse().map_err(|_| bad("bad user id"))?;
        let item: u32 = f[2].parse().map_err(|_| bad("bad item id"))?;
        if user as usize >= num_users || item as usize >= num_items {
            return Err(bad("id out of declared range"));
        }
        if users.last().map(|u| u.user) != Some(user) {
            users.push(UserSplit {
                user,
                train: Vec::new(),
                val: u32::MAX,
                test: u32::MAX,
                candidates: Vec::new(),
            });
        }
        let u = users.last_mut().expect("pushed above");
        match f[1] {
            "train" => u.train.push(item),
            "val" => u.val = item,
            "test" => u.test = item,
            "cand" => u.candidates.push(item),
            other => return Err(bad(&format!("unknown role `{other}`"))),
        }
    }
    if let Some(u) = users
        .iter()
        .find(|u| u.val == u32::MAX || u.test == u32::MAX)
    {
        return Err(Error::Format(format!(
            "user {} lacks a val or test label",
            u.user
        )));
    }
    Ok(SplitDataset {
        num_users,
        num_items,
        users,
    })
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let bad = || Error::Format(format!("bad split manifest header `{line}`"));
    let rest = line.strip_prefix('#').ok_or_else(bad)?;
    let mut users = None;
    let mut items = None;
    for kv in rest.split_whitespace() {
        match kv.split_once('=') {
            Some(("users", v)) => users = v.parse().ok(),
            Some(("items", v)) => items = v.parse().ok(),
            _ => return Err(bad()),
        }
    }
    Ok((users.ok_or_else(bad)?, items.ok_or_else(bad)?))
}
