use std::fmt::Write as _;

use super::split::SplitDataset;
use crate::error::{Error, Result};

/// Symmetric bipartite user-item graph in compressed-row layout.
///
/// Nodes `0..num_users` are users and `num_users..num_users + num_items`
/// are items. Neighbor lists are sorted and free of duplicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionGraph {
    num_users: usize,
    num_items: usize,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

impl InteractionGraph {
    /// Build from `(user, item)` pairs with dense 0-based ids; duplicates collapse.
    pub fn from_edges(
        num_users: usize,
        num_items: usize,
        edges: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Self> {
        let n = num_users + num_items;
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (u, v) in edges {
            if u as usize >= num_users || v as usize >= num_items {
                return Err(Error::invalid(format!(
                    "edge ({u}, {v}) outside {num_users} users x {num_items} items"
                )));
            }
            let item_node = (num_users + v as usize) as u32;
            adj[u as usize].push(item_node);
            adj[item_node as usize].push(u);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for mut list in adj {
            list.sort_unstable();
            list.dedup();
            neighbors.extend(list);
            offsets.push(neighbors.len());
        }
        Ok(Self {
            num_users,
            num_items,
            offsets,
            neighbors,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn user_node(&self, user: u32) -> usize {
        user as usize
    }

    pub fn item_node(&self, item: u32) -> usize {
        self.num_users + item as usize
    }

    #[inline]
    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.neighbors[self.offsets[node]..self.offsets[node + 1]]
    }

    #[inline]
    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes()).map(|n| self.degree(n)).collect()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors(a).binary_search(&(b as u32)).is_ok()
    }

    /// Each undirected edge once, as `(user, item)` with dense ids.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.num_users).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .map(move |&node| (u as u32, node - self.num_users as u32))
        })
    }

    /// Edge list TSV `user<TAB>item` preceded by a size header.
    pub fn to_edge_list_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# users={} items={}", self.num_users, self.num_items);
        for (u, v) in self.edges() {
            let _ = writeln!(out, "{u}\t{v}");
        }
        out
    }

    pub fn from_edge_list_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = lines
            .next()
            .map(|(_, l)| l)
            .ok_or_else(|| Error::Format("empty edge list".into()))?;
        let mut num_users = None;
        let mut num_items = None;
        for kv in header.trim_start_matches('#').split_whitespace() {
            match kv.split_once('=') {
                Some(("users", v)) => num_users = v.parse().ok(),
                Some(("items", v)) => num_items = v.parse().ok(),
                _ => {}
            }
        }
        let (num_users, num_items) = num_users
            .zip(num_items)
            .ok_or_else(|| Error::Format(format!("bad edge list header `{header}`")))?;
        let mut edges = Vec::new();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let parsed = line
                .split_once('\t')
                .and_then(|(u, v)| Some((u.parse::<u32>().ok()?, v.parse::<u32>().ok()?)));
            match parsed {
                Some(e) => edges.push(e),
                None => {
                    return Err(Error::Parse {
                        line: idx + 1,
                        msg: "expected user<TAB>item".into(),
                    })
                }
            }
        }
        Self::from_edges(num_users, num_items, edges)
    }

    /// Dense 0/1 adjacency, for small graphs and tests.
    pub fn dense_adjacency(&self) -> crate::tensor::Matrix {
        let n = self.num_nodes();
        let mut a = crate::tensor::Matrix::zeros(n, n);
        for i in 0..n {
            for &j in self.neighbors(i) {
                a[(i, j as usize)] = 1.0;
            }
        }
        a
    }
}

/// Graph over training interactions only; validation and test labels never enter.
pub fn build_graph(splits: &SplitDataset) -> InteractionGraph {
    let edges = splits
        .users
        .iter()
        .flat_map(|u| u.train.iter().map(move |&v| (u.user, v)));
    InteractionGraph::from_edges(splits.num_users, splits.num_items, edges)
        .expect("split ids are within declared ranges")
}
