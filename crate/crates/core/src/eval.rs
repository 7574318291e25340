//! Candidate reranking and leave-one-out ranking metrics.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::SplitDataset;
use crate::model::{generate, MicroModel};
use crate::wholeword::{
    build_direct_prompt, build_sequential_prompt, Entity, Task, Vocab, WholeWordScheme,
};

/// Items in rank order with non-increasing scores and no duplicates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedList {
    items: Vec<u32>,
    scores: Vec<f64>,
}

impl RankedList {
    /// Sort by score (descending, ties by ascending item id); a repeated
    /// item keeps its best entry.
    pub fn from_scores(mut scored: Vec<(u32, f64)>) -> Self {
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        let mut seen = HashSet::new();
        let (items, scores) = scored.into_iter().filter(|(i, _)| seen.insert(*i)).unzip();
        Self { items, scores }
    }

    /// A list in the given order with scores `0, -1, -2, …`.
    pub fn from_order(items: Vec<u32>) -> Result<Self> {
        let distinct: HashSet<u32> = items.iter().copied().collect();
        if distinct.len() != items.len() {
            return Err(Error::invalid("ranked list contains duplicate items"));
        }
        let scores = (0..items.len()).map(|i| -(i as f64)).collect();
        Ok(Self { items, scores })
    }

    pub fn items(&self) -> &[u32] {
        &self.items
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// 1-based rank of `item`.
    pub fn rank_of(&self, item: u32) -> Option<usize> {
        self.items.iter().position(|&i| i == item).map(|p| p + 1)
    }
}

/// Keep the first `k + n` entries, drop interacted items, truncate to `k`.
pub fn rerank(list: &RankedList, interacted: &HashSet<u32>, k: usize, n: usize) -> RankedList {
    let (items, scores) = list
        .items
        .iter()
        .zip(&list.scores)
        .take(k + n)
        .filter(|(i, _)| !interacted.contains(i))
        .take(k)
        .map(|(&i, &s)| (i, s))
        .unzip();
    RankedList { items, scores }
}

fn check_inputs(lists: &[RankedList], labels: &[u32], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if lists.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} lists but {} labels",
            lists.len(),
            labels.len()
        )));
    }
    Ok(())
}

fn label_rank(list: &RankedList, label: u32, k: usize) -> Option<usize> {
    list.rank_of(label).filter(|&r| r <= k)
}

/// Fraction of users whose label is in the top `k`.
pub fn hit_rate(lists: &[RankedList], labels: &[u32], k: usize) -> Result<f64> {
    check_inputs(lists, labels, k)?;
    if lists.is_empty() {
        return Ok(0.0);
    }
    let hits = lists
        .iter()
        .zip(labels)
        .filter(|(l, &y)| label_rank(l, y, k).is_some())
        .count();
    Ok(hits as f64 / lists.len() as f64)
}

/// Mean of `1 / log2(rank + 1)` over users with the label in the top `k`, zero otherwise.
pub fn ndcg(lists: &[RankedList], labels: &[u32], k: usize) -> Result<f64> {
    check_inputs(lists, labels, k)?;
    if lists.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = lists
        .iter()
        .zip(labels)
        .filter_map(|(l, &y)| label_rank(l, y, k))
        .map(|r| 1.0 / ((r + 1) as f64).log2())
        .sum();
    Ok(total / lists.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricReport {
    pub hr_at: BTreeMap<usize, f64>,
    pub ndcg_at: BTreeMap<usize, f64>,
    pub num_users: usize,
    /// Users skipped because generation produced no valid item.
    pub failures: usize,
    /// Beams dropped because they did not parse as an item id.
    pub dropped_beams: usize,
}

impl MetricReport {
    pub fn from_lists(lists: &[RankedList], labels: &[u32], ks: &[usize]) -> Result<Self> {
        let mut r = MetricReport {
            num_users: lists.len(),
            ..Default::default()
        };
        for &k in ks {
            r.hr_at.insert(k, hit_rate(lists, labels, k)?);
            r.ndcg_at.insert(k, ndcg(lists, labels, k)?);
        }
        Ok(r)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,k,value\n");
        for (k, v) in &self.hr_at {
            let _ = writeln!(out, "hr,{k},{v}");
        }
        for (k, v) in &self.ndcg_at {
            let _ = writeln!(out, "ndcg,{k},{v}");
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("  k      HR@k    NDCG@k\n");
        for (k, hr) in &self.hr_at {
            let nd = self.ndcg_at.get(k).copied().unwrap_or(f64::NAN);
            let _ = writeln!(out, "{k:>3}  {hr:>8.4}  {nd:>8.4}");
        }
        let _ = writeln!(
            out,
            "users={} failures={} dropped_beams={}",
            self.num_users, self.failures, self.dropped_beams
        );
        out
    }
}

/// Anything that can rank candidates for a user or generate next items.
pub trait Recommender: Sync {
    fn rank_candidates(&self, user: u32, candidates: &[u32]) -> Result<RankedList>;

    /// Ranked next items and the number of unparseable outputs.
    fn generate_next(
        &self,
        user: u32,
        history: &[u32],
        beams: usize,
    ) -> Result<(RankedList, usize)>;
}

/// A trained model paired with the whole-word scheme of the task it serves.
pub struct ModelRecommender<'a> {
    pub model: &'a MicroModel,
    pub scheme: &'a WholeWordScheme,
    pub max_len: usize,
}

impl Recommender for ModelRecommender<'_> {
    fn rank_candidates(&self, user: u32, candidates: &[u32]) -> Result<RankedList> {
        let v = &self.model.vocab;
        let prompt = build_direct_prompt(v, user, candidates)?;
        let targets: Vec<Vec<u32>> = candidates.iter().map(|&c| item_target(v, c)).collect();
        let scores = self.model.score_targets(&prompt, self.scheme, &targets)?;
        Ok(RankedList::from_scores(
            candidates.iter().copied().zip(scores).collect(),
        ))
    }

    fn generate_next(
        &self,
        user: u32,
        history: &[u32],
        beams: usize,
    ) -> Result<(RankedList, usize)> {
        let prompt = build_sequential_prompt(&self.model.vocab, user, history)?;
        let g = generate(self.model, &prompt, self.scheme, beams, self.max_len)?;
        Ok((g.list, g.dropped))
    }
}

/// Target tokens for an item: its subwords followed by `</s>`.
pub fn item_target(vocab: &Vocab, item: u32) -> Vec<u32> {
    let mut t = vocab.encode_id(Entity::Item(item));
    t.push(Vocab::EOS);
    t
}

/// One user's raw ranking before reranking.
#[derive(Debug, Clone, PartialEq)]
pub struct UserRanking {
    pub user: u32,
    pub label: u32,
    pub list: RankedList,
    pub interacted: HashSet<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rankings {
    pub task: Task,
    pub users: Vec<UserRanking>,
    pub failures: usize,
    pub dropped_beams: usize,
}

impl Rankings {
    /// Metrics after `(k + n)` reranking; direct-task lists are never reranked.
    pub fn report(&self, ks: &[usize], n: usize) -> Result<MetricReport> {
        let max_k = ks.iter().copied().max().unwrap_or(0);
        let lists: Vec<RankedList> = self
            .users
            .iter()
            .map(|u| match self.task {
                Task::Sequential => rerank(&u.list, &u.interacted, max_k, n),
                _ => u.list.clone(),
            })
            .collect();
        let labels: Vec<u32> = self.users.iter().map(|u| u.label).collect();
        let mut r = MetricReport::from_lists(&lists, &labels, ks)?;
        r.failures = self.failures;
        r.dropped_beams = self.dropped_beams;
        Ok(r)
    }
}

/// Rank the test label for every user. The direct task scores the user's
/// candidate list; the sequential task generates from train + validation
/// history with `beams` beams.
pub fn collect_rankings<R: Recommender>(
    rec: &R,
    splits: &SplitDataset,
    task: Task,
    beams: usize,
) -> Result<Rankings> {
    let results: Vec<Result<Option<(UserRanking, usize)>>> = splits
        .users
        .par_iter()
        .map(|u| {
            let out = match task {
                Task::Direct => {
                    if u.candidates.is_empty() {
                        return Err(Error::invalid(format!("user {} has no candidates", u.user)));
                    }
                    rec.rank_candidates(u.user, &u.candidates).map(|l| (l, 0))
                }
                Task::Sequential => {
                    let mut history = u.train.clone();
                    history.push(u.val);
                    rec.generate_next(u.user, &history, beams)
                }
                Task::Explanation => {
                    return Err(Error::invalid("explanation task has no ranking metrics"))
                }
            };
            match out {
                Ok((list, dropped)) => Ok(Some((
                    UserRanking {
                        user: u.user,
                        label: u.test,
                        list,
                        interacted: u.known_at_test(),
                    },
                    dropped,
                ))),
                Err(Error::EmptyOutput) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut r = Rankings {
        task,
        users: Vec::new(),
        failures: 0,
        dropped_beams: 0,
    };
    for res in results {
        match res? {
            Some((u, d)) => {
                r.dropped_beams += d;
                r.users.push(u);
            }
            None => r.failures += 1,
        }
    }
    Ok(r)
}

/// Generate, rerank with `n` extra candidates, and score at every `k`.
pub fn evaluate_task<R: Recommender>(
    rec: &R,
    splits: &SplitDataset,
    task: Task,
    ks: &[usize],
    n: usize,
    beams: usize,
) -> Result<MetricReport> {
    let max_k = ks
        .iter()
        .copied()
        .max()
        .ok_or_else(|| Error::invalid("no k values"))?;
    let beams = beams.max(max_k + n);
    collect_rankings(rec, splits, task, beams)?.report(ks, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::UserSplit;
    use crate::rng;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn set(items: &[u32]) -> HashSet<u32> {
        items.iter().copied().collect()
    }

    #[test]
    fn rerank_examples() {
        let l = RankedList::from_order(vec![1, 2, 3, 4]).unwrap();
        assert_eq!(rerank(&l, &set(&[1, 3]), 2, 2).items(), &[2, 4]);
        assert_eq!(rerank(&l, &HashSet::new(), 2, 2).items(), &[1, 2]);
        assert_eq!(rerank(&l, &set(&[1]), 2, 0).items(), &[2]);
        assert_eq!(rerank(&l, &set(&[1, 2, 3, 4]), 2, 2).items(), &[] as &[u32]);
    }

    #[test]
    fn metric_examples() {
        let l = RankedList::from_order(vec![9, 8, 7, 6, 5]).unwrap();
        assert_eq!(hit_rate(std::slice::from_ref(&l), &[9], 5).unwrap(), 1.0);
        assert_eq!(ndcg(std::slice::from_ref(&l), &[9], 5).unwrap(), 1.0);
        assert_eq!(ndcg(std::slice::from_ref(&l), &[7], 5).unwrap(), 0.5);
        assert_eq!(hit_rate(std::slice::from_ref(&l), &[1], 5).unwrap(), 0.0);
        assert!(hit_rate(std::slice::from_ref(&l), &[9], 0).is_err());
        assert!(ndcg(&[l], &[9], 0).is_err());
    }

    #[test]
    fn from_scores_breaks_ties_by_item() {
        let l = RankedList::from_scores(vec![(5, 1.0), (3, 1.0), (9, 2.0), (3, 0.5)]);
        assert_eq!(l.items(), &[9, 3, 5]);
        assert_eq!(l.scores(), &[2.0, 1.0, 1.0]);
    }

    #[test]
    fn brute_force_metric_oracle() {
        let mut r = rng::stream(4, "eval-test");
        let mut lists = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..1000 {
            let mut items: Vec<u32> = (0..30).collect();
            items.shuffle(&mut r);
            items.truncate(r.random_range(0..20));
            lists.push(RankedList::from_order(items).unwrap());
            labels.push(r.random_range(0..30));
        }
        for k in [1, 5, 10] {
            let mut hits = 0.0;
            let mut gain = 0.0;
            for (l, y) in lists.iter().zip(&labels) {
                for (pos, it) in l.items().iter().enumerate().take(k) {
                    if it == y {
                        hits += 1.0;
                        gain += 1.0 / (pos as f64 + 2.0).log2();
                    }
                }
            }
            assert_eq!(hit_rate(&lists, &labels, k).unwrap(), hits / 1000.0);
            assert_eq!(ndcg(&lists, &labels, k).unwrap(), gain / 1000.0);
        }
    }

    struct Oracle {
        labels: std::collections::HashMap<u32, u32>,
    }

    impl Recommender for Oracle {
        fn rank_candidates(&self, user: u32, candidates: &[u32]) -> Result<RankedList> {
            let y = self.labels[&user];
            let mut order = vec![y];
            order.extend(candidates.iter().copied().filter(|&c| c != y));
            RankedList::from_order(order)
        }

        fn generate_next(
            &self,
            user: u32,
            _history: &[u32],
            beams: usize,
        ) -> Result<(RankedList, usize)> {
            let y = self.labels[&user];
            let mut order = vec![y];
            order.extend((1000..).take(beams - 1));
            Ok((RankedList::from_order(order)?, 0))
        }
    }

    #[test]
    fn oracle_recommender_scores_perfectly() {
        let users: Vec<UserSplit> = (0..20)
            .map(|u| UserSplit {
                user: u,
                train: vec![u + 1, u + 2],
                val: u + 3,
                test: u + 4,
                candidates: (u + 4..u + 14).collect(),
            })
            .collect();
        let splits = SplitDataset {
            num_users: 20,
            num_items: 40,
            users: users.clone(),
        };
        let oracle = Oracle {
            labels: users.iter().map(|u| (u.user, u.test)).collect(),
        };
        for task in [Task::Direct, Task::Sequential] {
            let r = evaluate_task(&oracle, &splits, task, &[5, 10], 5, 20).unwrap();
            assert_eq!(r.hr_at[&5], 1.0);
            assert_eq!(r.ndcg_at[&5], 1.0);
            assert!(r.hr_at.contains_key(&10));
            assert!(r.to_csv().starts_with("metric,k,value\nhr,5,1\n"));
        }
    }

    fn arb_case() -> impl Strategy<Value = (Vec<u32>, HashSet<u32>, u32, usize, usize)> {
        (1usize..30, 1usize..10, 0usize..10).prop_flat_map(|(len, k, n)| {
            (
                Just((0..len as u32).collect::<Vec<u32>>()).prop_shuffle(),
                proptest::collection::hash_set(0u32..40, 0..20),
                0u32..40,
                Just(k),
                Just(n),
            )
        })
    }

    proptest! {
        #[test]
        fn rerank_is_idempotent((items, interacted, _y, k, n) in arb_case()) {
            let l = RankedList::from_order(items).unwrap();
            let once = rerank(&l, &interacted, k, n);
            prop_assert_eq!(rerank(&once, &interacted, k, n), once.clone());
            prop_assert!(once.len() <= k);
        }

        #[test]
        fn label_rank_never_degrades((items, mut interacted, y, k, n) in arb_case()) {
            interacted.remove(&y);
            let l = RankedList::from_order(items).unwrap();
            let before = label_rank(&l, y, k);
            let after = label_rank(&rerank(&l, &interacted, k, n), y, k);
            if let Some(b) = before {
                prop_assert!(after.is_some_and(|a| a <= b));
            }
            for m in 0..n {
                let lo = label_rank(&rerank(&l, &interacted, k, m), y, k);
                let hi = label_rank(&rerank(&l, &interacted, k, m + 1), y, k);
                if let Some(lo) = lo {
                    prop_assert!(hi.is_some_and(|h| h <= lo));
                }
            }
        }

        #[test]
        fn metric_bounds(ranks in proptest::collection::vec(0usize..15, 1..50), k in 1usize..12) {
            let lists: Vec<RankedList> = ranks.iter().map(|_| RankedList::from_order((0..12).collect()).unwrap()).collect();
            let labels: Vec<u32> = ranks.iter().map(|&r| r as u32).collect();
            let hr = hit_rate(&lists, &labels, k).unwrap();
            let nd = ndcg(&lists, &labels, k).unwrap();
            prop_assert!((0.0..=1.0).contains(&hr));
            prop_assert!(0.0 <= nd && nd <= hr);
        }
    }
}
