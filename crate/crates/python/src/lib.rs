//! Python bindings for propagation, metrics, reranking and the rank experiment.

use std::collections::HashSet;

use graphword_core::eval::{hit_rate, ndcg, RankedList};
use graphword_core::ingest::InteractionGraph;
use graphword_core::propagation::{random_feature_propagation, PropagationConfig};
use graphword_core::rank_analysis::{run_rank_trials, RankExperiment};
use graphword_core::synth::{synth_corpus, SynthConfig};
use graphword_core::Error;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        3 => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn ranked(lists: Vec<Vec<u32>>) -> PyResult<Vec<RankedList>> {
    lists
        .into_iter()
        .map(|l| RankedList::from_order(l).map_err(py_err))
        .collect()
}

/// Graph-aware whole-word rows (users first, then items) and `ω₀`.
#[pyfunction]
#[pyo3(signature = (edges, num_users, num_items, dim=64, layers=4, sigma=5.0, seed=0))]
fn propagate(
    edges: Vec<(u32, u32)>,
    num_users: usize,
    num_items: usize,
    dim: usize,
    layers: usize,
    sigma: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let g = InteractionGraph::from_edges(num_users, num_items, edges).map_err(py_err)?;
    let cfg = PropagationConfig {
        sigma,
        layers,
        dim,
        seed,
    };
    let omega = random_feature_propagation(&g, &cfg).map_err(py_err)?;
    Ok((
        omega.rows.iter_rows().map(<[f64]>::to_vec).collect(),
        omega.omega0,
    ))
}

/// User-user entry of the squared normalized adjacency.
#[pyfunction]
fn influence_coefficient(
    edges: Vec<(u32, u32)>,
    num_users: usize,
    num_items: usize,
    ui: u32,
    uj: u32,
) -> PyResult<f64> {
    let g = InteractionGraph::from_edges(num_users, num_items, edges).map_err(py_err)?;
    graphword_core::propagation::influence_coefficient(&g, ui, uj).map_err(py_err)
}

#[pyfunction(name = "hit_rate")]
fn py_hit_rate(lists: Vec<Vec<u32>>, labels: Vec<u32>, k: usize) -> PyResult<f64> {
    hit_rate(&ranked(lists)?, &labels, k).map_err(py_err)
}

#[pyfunction(name = "ndcg")]
fn py_ndcg(lists: Vec<Vec<u32>>, labels: Vec<u32>, k: usize) -> PyResult<f64> {
    ndcg(&ranked(lists)?, &labels, k).map_err(py_err)
}

/// Keep the first `k + n` items, drop interacted ones, truncate to `k`.
#[pyfunction]
fn rerank(items: Vec<u32>, interacted: HashSet<u32>, k: usize, n: usize) -> PyResult<Vec<u32>> {
    let list = RankedList::from_order(items).map_err(py_err)?;
    Ok(graphword_core::eval::rerank(&list, &interacted, k, n)
        .items()
        .to_vec())
}

/// `(rank(A_x), rank(A_x+p))` per trial.
#[pyfunction]
#[pyo3(signature = (n=64, d_x=6, d_p=32, d_n=16, trials=20, seed=0))]
fn rank_trials(
    n: usize,
    d_x: usize,
    d_p: usize,
    d_n: usize,
    trials: usize,
    seed: u64,
) -> PyResult<Vec<(usize, usize)>> {
    let exp = RankExperiment {
        n,
        d_x,
        d_p,
        d_n,
        trials,
        ..Default::default()
    };
    let out = run_rank_trials(&exp, seed).map_err(py_err)?;
    Ok(out.iter().map(|t| (t.rank_x, t.rank_xp)).collect())
}

/// Block-structured interaction log as `user<TAB>item<TAB>timestamp` text.
#[pyfunction]
#[pyo3(signature = (seed=0, blocks=4, users=200, items=100))]
fn synth(seed: u64, blocks: usize, users: usize, items: usize) -> PyResult<String> {
    let c = synth_corpus(&SynthConfig {
        blocks,
        users,
        items,
        seed,
        ..Default::default()
    })
    .map_err(py_err)?;
    Ok(c.to_tsv())
}

#[pymodule]
fn graphword(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(propagate, m)?)?;
    m.add_function(wrap_pyfunction!(influence_coefficient, m)?)?;
    m.add_function(wrap_pyfunction!(py_hit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(py_ndcg, m)?)?;
    m.add_function(wrap_pyfunction!(rerank, m)?)?;
    m.add_function(wrap_pyfunction!(rank_trials, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    Ok(())
}
