//! Random feature propagation over parameter-free LightGCN layers.
//!
//! Node embeddings start as i.i.d. `N(0, σ²)` noise and are smoothed through
//! the symmetrically normalized adjacency `Ã = D^{-1/2} A D^{-1/2}`. The
//! layer average becomes the graph-aware whole-word table `Ω`, so nodes that
//! share many short paths end up with similar rows.
//!
//! Two independent routes are provided: [`propagate_layer`] walks neighbor
//! lists node by node, [`propagate_matrix`] materializes `Ã` as a weighted
//! sparse matrix and multiplies. Isolated nodes use `1/√0 := 0`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::InteractionGraph;
use crate::rng;
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationConfig {
    pub sigma: f64,
    pub layers: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            sigma: 5.0,
            layers: 4,
            dim: 64,
            seed: 0,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!(
                "sigma must be > 0, got {}",
                self.sigma
            )));
        }
        if self.dim == 0 {
            return Err(Error::Config("dim must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-layer embeddings `E⁽⁰⁾ … E⁽ᴸ⁾`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    pub layers: Vec<Matrix>,
}

impl LayerStack {
    pub fn depth(&self) -> usize {
        self.layers.len().saturating_sub(1)
    }
}

/// Graph-aware whole-word table `Ω` plus the shared non-ID vector `ω₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaTable {
    pub num_users: usize,
    pub num_items: usize,
    pub rows: Matrix,
    pub omega0: Vec<f64>,
}

impl OmegaTable {
    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    pub fn user_row(&self, user: u32) -> Option<&[f64]> {
        ((user as usize) < self.num_users).then(|| self.rows.row(user as usize))
    }

    pub fn item_row(&self, item: u32) -> Option<&[f64]> {
        ((item as usize) < self.num_items).then(|| self.rows.row(self.num_users + item as usize))
    }
}

/// Layer 0: i.i.d. normal entries from the `init` stream.
pub fn init_embeddings(graph: &InteractionGraph, config: &PropagationConfig) -> Matrix {
    let mut rng = rng::stream(config.seed, rng::INIT);
    Matrix::random_normal(graph.num_nodes(), config.dim, config.sigma, &mut rng)
}

fn inv_sqrt_degree(graph: &InteractionGraph) -> Vec<f64> {
    (0..graph.num_nodes())
        .map(|n| match graph.degree(n) {
            0 => 0.0,
            d => 1.0 / (d as f64).sqrt(),
        })
        .collect()
}

/// One LightGCN layer, node by node:
/// `eₙ' = Σ_{m∈N(n)} eₘ / (√|N(n)| √|N(m)|)`.
pub fn propagate_layer(graph: &InteractionGraph, current: &Matrix) -> Result<Matrix> {
    if current.rows() != graph.num_nodes() {
        return Err(Error::shape(format!(
            "embedding has {} rows, graph has {} nodes",
            current.rows(),
            graph.num_nodes()
        )));
    }
    let dim = current.cols();
    let norm = inv_sqrt_degree(graph);
    let mut next = Matrix::zeros(current.rows(), dim);
    if dim == 0 {
        return Ok(next);
    }
    next.data_mut()
        .par_chunks_mut(dim)
        .enumerate()
        .for_each(|(n, out)| {
            for &m in graph.neighbors(n) {
                let w = norm[n] * norm[m as usize];
                for (o, x) in out.iter_mut().zip(current.row(m as usize)) {
                    *o += w * x;
                }
            }
        });
    Ok(next)
}

/// `Ã` as explicit CSR weights.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn new(graph: &InteractionGraph) -> Self {
        let degrees = graph.degrees();
        let d_inv_sqrt: Vec<f64> = degrees
            .iter()
            .map(|&d| if d == 0 { 0.0 } else { (d as f64).powf(-0.5) })
            .collect();
        let mut offsets = vec![0];
        let mut cols = Vec::new();
        let mut values = Vec::new();
        for i in 0..graph.num_nodes() {
            for &j in graph.neighbors(i) {
                cols.push(j as usize);
                values.push(d_inv_sqrt[i] * d_inv_sqrt[j as usize]);
            }
            offsets.push(cols.len());
        }
        Self {
            offsets,
            cols,
            values,
        }
    }

    pub fn size(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.size();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for k in self.offsets[i]..self.offsets[i + 1] {
                m[(i, self.cols[k])] = self.values[k];
            }
        }
        m
    }

    /// Sparse-dense product `Ã · E`.
    pub fn apply(&self, e: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(e.rows(), e.cols());
        for i in 0..self.size() {
            for k in self.offsets[i]..self.offsets[i + 1] {
                let w = self.values[k];
                for (o, x) in out.row_mut(i).iter_mut().zip(e.row(self.cols[k])) {
                    *o += w * x;
                }
            }
        }
        out
    }
}

/// Matrix form `E⁽ˡ⁺¹⁾ = Ã E⁽ˡ⁾` for `layers` steps, keeping every layer.
pub fn propagate_matrix(
    graph: &InteractionGraph,
    e0: &Matrix,
    layers: usize,
) -> Result<LayerStack> {
    if e0.rows() != graph.num_nodes() {
        return Err(Error::shape(format!(
            "embedding has {} rows, graph has {} nodes",
            e0.rows(),
            graph.num_nodes()
        )));
    }
    let a_tilde = NormalizedAdjacency::new(graph);
    let mut stack = vec![e0.clone()];
    for _ in 0..layers {
        let next = a_tilde.apply(stack.last().expect("non-empty"));
        stack.push(next);
    }
    Ok(LayerStack { layers: stack })
}

/// `Ω = (Σₗ E⁽ˡ⁾) / (L+1)`; `ω₀` comes from its own stream so it does not
/// depend on the graph size.
pub fn aggregate_omega(
    graph: &InteractionGraph,
    stack: &LayerStack,
    config: &PropagationConfig,
) -> OmegaTable {
    let first = &stack.layers[0];
    let mut sum = Matrix::zeros(first.rows(), first.cols());
    for layer in &stack.layers {
        sum.add_assign(layer);
    }
    sum.scale(1.0 / stack.layers.len() as f64);
    let mut rng = rng::stream(config.seed, rng::OMEGA0);
    let omega0 = Matrix::random_normal(1, first.cols(), config.sigma, &mut rng).into_data();
    OmegaTable {
        num_users: graph.num_users(),
        num_items: graph.num_items(),
        rows: sum,
        omega0,
    }
}

/// Full pipeline: init, propagate `config.layers` times, average.
pub fn random_feature_propagation(
    graph: &InteractionGraph,
    config: &PropagationConfig,
) -> Result<OmegaTable> {
    config.validate()?;
    let e0 = init_embeddings(graph, config);
    let stack = propagate_matrix(graph, &e0, config.layers)?;
    Ok(aggregate_omega(graph, &stack, config))
}

/// Influence of user `uj` on user `ui` through shared items:
/// `(1/(√|N(ui)| √|N(uj)|)) · Σ_{k ∈ N(ui) ∩ N(uj)} 1/|N(k)|`.
///
/// This equals the `(ui, uj)` entry of `Ã²`. Isolated users give 0.
pub fn influence_coefficient(graph: &InteractionGraph, ui: u32, uj: u32) -> Result<f64> {
    let nu = graph.num_users();
    if ui as usize >= nu || uj as usize >= nu {
        return Err(Error::invalid(format!("users {ui}, {uj} not in 0..{nu}")));
    }
    let (a, b) = (graph.user_node(ui), graph.user_node(uj));
    let (da, db) = (graph.degree(a), graph.degree(b));
    if da == 0 || db == 0 {
        return Ok(0.0);
    }
    let (na, nb) = (graph.neighbors(a), graph.neighbors(b));
    let (mut i, mut j) = (0, 0);
    let mut shared = 0.0;
    while i < na.len() && j < nb.len() {
        match na[i].cmp(&nb[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                shared += 1.0 / graph.degree(na[i] as usize) as f64;
                i += 1;
                j += 1;
            }
        }
    }
    Ok(shared / ((da as f64).sqrt() * (db as f64).sqrt()))
}
