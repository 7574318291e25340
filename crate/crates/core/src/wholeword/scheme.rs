use std::sync::Arc;

use rand::seq::SliceRandom;

use super::prompt::TokenizedPrompt;
use super::vocab::Entity;
use crate::error::{Error, Result};
use crate::propagation::OmegaTable;
use crate::rng;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeMode {
    GraphAware,
    Incremental,
    RandomIndex,
    /// Every token gets `ω₀`; the "no graph awareness" baseline.
    Uniform,
}

impl SchemeMode {
    pub fn name(self) -> &'static str {
        match self {
            SchemeMode::GraphAware => "graph_aware",
            SchemeMode::Incremental => "incremental",
            SchemeMode::RandomIndex => "random_index",
            SchemeMode::Uniform => "uniform",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            SchemeMode::GraphAware,
            SchemeMode::Incremental,
            SchemeMode::RandomIndex,
            SchemeMode::Uniform,
        ]
        .into_iter()
        .find(|m| m.name() == s)
    }
}

/// Appearance-indexed table `X_ω̂` with `I` rows; row 0 is reserved for
/// non-ID tokens and appearance index `a` reads row `a + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementalTable {
    pub rows: Matrix,
}

impl IncrementalTable {
    pub fn random(max_index: usize, dim: usize, sigma: f64, seed: u64) -> Self {
        let mut rng = rng::stream(seed, "incremental");
        Self {
            rows: Matrix::random_normal(max_index, dim, sigma, &mut rng),
        }
    }

    pub fn max_index(&self) -> usize {
        self.rows.rows()
    }
}

#[derive(Debug, Clone)]
pub enum WholeWordScheme {
    GraphAware(Arc<OmegaTable>),
    Incremental(Arc<IncrementalTable>),
    /// Incremental rows under a per-prompt permutation of appearance indices.
    RandomIndex {
        table: Arc<IncrementalTable>,
        seed: u64,
    },
    Uniform(Arc<Vec<f64>>),
}

impl WholeWordScheme {
    pub fn mode(&self) -> SchemeMode {
        match self {
            WholeWordScheme::GraphAware(_) => SchemeMode::GraphAware,
            WholeWordScheme::Incremental(_) => SchemeMode::Incremental,
            WholeWordScheme::RandomIndex { .. } => SchemeMode::RandomIndex,
            WholeWordScheme::Uniform(_) => SchemeMode::Uniform,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            WholeWordScheme::GraphAware(o) => o.dim(),
            WholeWordScheme::Incremental(t) | WholeWordScheme::RandomIndex { table: t, .. } => {
                t.rows.cols()
            }
            WholeWordScheme::Uniform(v) => v.len(),
        }
    }
}

fn incremental_rows(
    table: &IncrementalTable,
    prompt: &TokenizedPrompt,
    remap: impl Fn(u32) -> u32,
) -> Result<Matrix> {
    let dim = table.rows.cols();
    let mut out = Matrix::zeros(prompt.len(), dim);
    for (i, span) in prompt.spans.iter().enumerate() {
        let row = match span.appearance {
            Some(a) => remap(a) as usize + 1,
            None => 0,
        };
        if row >= table.max_index() {
            return Err(Error::invalid(format!(
                "appearance index {} exceeds incremental table size {}",
                row - 1,
                table.max_index()
            )));
        }
        out.row_mut(i).copy_from_slice(table.rows.row(row));
    }
    Ok(out)
}

/// Whole-word matrix `X_ω` (one row per prompt token).
pub fn lookup_wholeword(scheme: &WholeWordScheme, prompt: &TokenizedPrompt) -> Result<Matrix> {
    match scheme {
        WholeWordScheme::GraphAware(omega) => {
            let mut out = Matrix::zeros(prompt.len(), omega.dim());
            for (i, span) in prompt.spans.iter().enumerate() {
                let row = match span.entity {
                    None => &omega.omega0[..],
                    Some(e @ Entity::User(u)) => omega
                        .user_row(u)
                        .ok_or_else(|| Error::ColdEntity(e.to_string()))?,
                    Some(e @ Entity::Item(v)) => omega
                        .item_row(v)
                        .ok_or_else(|| Error::ColdEntity(e.to_string()))?,
                };
                out.row_mut(i).copy_from_slice(row);
            }
            Ok(out)
        }
        WholeWordScheme::Incremental(table) => incremental_rows(table, prompt, |a| a),
        WholeWordScheme::RandomIndex { table, seed } => {
            let n = prompt.max_appearance().map_or(0, |m| m as usize + 1);
            let mut perm: Vec<u32> = (0..n as u32).collect();
            let mut r = rng::substream(*seed, "random-index", rng::hash_key(&prompt.tokens));
            perm.shuffle(&mut r);
            incremental_rows(table, prompt, |a| perm[a as usize])
        }
        WholeWordScheme::Uniform(omega0) => {
            let mut out = Matrix::zeros(prompt.len(), omega0.len());
            for i in 0..prompt.len() {
                out.row_mut(i).copy_from_slice(omega0);
            }
            Ok(out)
        }
    }
}
