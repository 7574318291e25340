#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use graphword::config::RunConfig;
use graphword::ingest::{parse_interactions_str, InteractionGraph};
use graphword::model::{
    train, EarlyStopper, Example, MicroModel, ModelConfig, StopDecision, TaskData, TrainConfig,
};
use graphword::pipeline::{explanation_examples, prepare, Prepared};
use graphword::propagation::{random_feature_propagation, OmegaTable, PropagationConfig};
use graphword::rng;
use graphword::synth::{synth_corpus, SynthConfig, SynthCorpus};
use graphword::wholeword::{build_direct_prompt, Entity, Task, Vocab, WholeWordScheme};
use rand::seq::IndexedRandom;
use rand::Rng;

pub fn random_graph(seed: u64, users: usize, items: usize, p: f64) -> InteractionGraph {
    let mut r = rng::stream(seed, "test-graph");
    let mut edges = Vec::new();
    for u in 0..users as u32 {
        for i in 0..items as u32 {
            if r.random::<f64>() < p {
                edges.push((u, i));
            }
        }
    }
    InteractionGraph::from_edges(users, items, edges).unwrap()
}

pub fn omega_for(graph: &InteractionGraph, dim: usize, sigma: f64, seed: u64) -> Arc<OmegaTable> {
    let cfg = PropagationConfig {
        sigma,
        layers: 2,
        dim,
        seed,
    };
    Arc::new(random_feature_propagation(graph, &cfg).unwrap())
}

pub fn graph_scheme(dim: usize, seed: u64) -> WholeWordScheme {
    let g = random_graph(seed, 30, 120, 0.05);
    WholeWordScheme::GraphAware(omega_for(&g, dim, 0.5, seed))
}

pub fn tiny_config(d_n: usize, layers: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        d_n,
        heads: 2,
        d_ff: 2 * d_n,
        enc_layers: layers,
        dec_layers: layers,
        alpha: 1.0,
        beams: 5,
        seed,
    }
}

pub fn tiny_model(d_n: usize, layers: usize, seed: u64) -> MicroModel {
    MicroModel::new(tiny_config(d_n, layers, seed), Vocab::new()).unwrap()
}

/// Settings sized for one CPU: a 1+1-layer model with whole-word vectors at
/// the scale of the token embeddings. 100 items leave too few negatives for
/// 99 per user, so evaluation lists hold 80.
pub fn desk_config(seed: u64) -> RunConfig {
    RunConfig {
        alpha: 1.0,
        sigma: 1.0,
        d_n: 32,
        heads: 2,
        d_ff: 64,
        enc_layers: 1,
        dec_layers: 1,
        batch: 32,
        negatives: 80,
        seed,
        ..RunConfig::default()
    }
}

/// Direct task only, eight propagation layers, each training pair seen with
/// four fresh negative sets per epoch.
pub fn ablation_config(seed: u64) -> RunConfig {
    RunConfig {
        layers: 8,
        train_negatives: 4,
        train_views: 4,
        patience: 6,
        tasks: vec![Task::Direct],
        ..desk_config(seed)
    }
}

/// Sequential task only.
pub fn ordering_config(seed: u64) -> RunConfig {
    RunConfig {
        tasks: vec![Task::Sequential],
        ..desk_config(seed)
    }
}

pub fn synth(seed: u64) -> SynthCorpus {
    synth_corpus(&SynthConfig {
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

pub fn synth_prepared(cfg: &RunConfig) -> Prepared {
    let log = parse_interactions_str(&synth(cfg.seed).to_tsv()).unwrap();
    prepare(&log, cfg).unwrap()
}

pub fn item_example(vocab: &Vocab, user: u32, cands: &[u32], target: u32) -> Example {
    let mut t = vocab.encode_id(Entity::Item(target));
    t.push(Vocab::EOS);
    Example {
        prompt: build_direct_prompt(vocab, user, cands).unwrap(),
        target: t,
    }
}

/// `(param, row, col)` positions: every prompt row of the direct task, the
/// token rows the example touches, and uniform draws over the rest.
pub fn sample_positions(
    m: &graphword::model::MicroModel,
    ex: &Example,
    count: usize,
) -> Vec<(usize, usize, usize)> {
    let mut r = rng::stream(11, "grad-sample");
    let names = m.params.names();
    let prompt = m.params.index("prompt").unwrap();
    let tok = m.params.index("tok_emb").unwrap();
    let d = m.config.d_n;
    let mut out = Vec::new();
    for s in 0..3 {
        let row = m
            .vocab
            .as_prompt_slot(m.vocab.prompt_slot(Task::Direct, s))
            .unwrap();
        out.push((prompt, row, r.random_range(0..d)));
    }
    let used: Vec<u32> = ex
        .prompt
        .tokens
        .iter()
        .chain(&ex.target)
        .copied()
        .filter(|&t| m.vocab.as_prompt_slot(t).is_none())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    for _ in 0..10 {
        out.push((
            tok,
            *used.choose(&mut r).unwrap() as usize,
            r.random_range(0..d),
        ));
    }
    while out.len() < count {
        let p = r.random_range(0..names.len());
        let v = &m.params.values()[p];
        out.push((p, r.random_range(0..v.rows()), r.random_range(0..v.cols())));
    }
    out
}

pub struct GradCheck {
    pub compared: usize,
    pub worst_rel: f64,
}

/// Central differences with step 1e-4 on a 2+2-layer, `d_n = 16` model.
/// Pairs where both gradients vanish are checked absolutely and not counted.
pub fn gradient_check(samples: usize) -> GradCheck {
    let mut m = tiny_model(16, 2, 4);
    m.config.alpha = 2.0;
    let scheme = graph_scheme(16, 4);
    let ex = item_example(&m.vocab, 3, &[7, 12, 40], 12);
    let mut grads = m.params.zeros_like();
    m.example_grads(&ex.prompt, &ex.target, &scheme, &mut grads)
        .unwrap();
    let h = 1e-4;
    let mut out = GradCheck {
        compared: 0,
        worst_rel: 0.0,
    };
    for (p, i, j) in sample_positions(&m, &ex, samples) {
        let orig = m.params.values()[p][(i, j)];
        m.params.values_mut()[p][(i, j)] = orig + h;
        let up = m.example_loss(&ex.prompt, &ex.target, &scheme).unwrap();
        m.params.values_mut()[p][(i, j)] = orig - h;
        let down = m.example_loss(&ex.prompt, &ex.target, &scheme).unwrap();
        m.params.values_mut()[p][(i, j)] = orig;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads[p][(i, j)];
        let scale = analytic.abs().max(numeric.abs());
        if scale < 1e-7 {
            if (analytic - numeric).abs() >= 1e-8 {
                out.worst_rel = f64::INFINITY;
            }
            continue;
        }
        out.worst_rel = out.worst_rel.max((analytic - numeric).abs() / scale);
        out.compared += 1;
    }
    out
}

/// Training loss on the explanation copy task before and after 20 epochs.
pub fn copy_task_losses(seed: u64) -> (f64, f64) {
    let cfg = desk_config(seed);
    let prep = synth_prepared(&cfg);
    let vocab = Vocab::new();
    let (train_ex, val) = explanation_examples(&vocab, &prep.splits);
    let data = [TaskData {
        task: Task::Explanation,
        scheme: prep.scheme(cfg.direct_scheme, cfg.seed),
        train: train_ex,
        val,
    }];
    let mut m = MicroModel::new(cfg.model_config(), vocab).unwrap();
    let initial = m.forward_loss(&data[0].train, &data[0].scheme).unwrap();
    let tc = TrainConfig {
        epochs: 20,
        patience: 20,
        ..cfg.train_config()
    };
    train(&mut m, &data, &tc).unwrap();
    (
        initial,
        m.forward_loss(&data[0].train, &data[0].scheme).unwrap(),
    )
}

/// Mean loss of a fresh model on random direct examples, and `ln |V|`.
pub fn untrained_loss() -> (f64, f64) {
    let m = tiny_model(32, 1, 6);
    let scheme = graph_scheme(32, 6);
    let mut r = rng::stream(6, "uniform-loss");
    let exs: Vec<Example> = (0..40)
        .map(|_| {
            let cands: Vec<u32> = (0..5).map(|_| r.random_range(0..120)).collect();
            item_example(&m.vocab, r.random_range(0..30), &cands, cands[0])
        })
        .collect();
    (
        m.forward_loss(&exs, &scheme).unwrap(),
        (m.vocab.len() as f64).ln(),
    )
}

/// Best and stopping epochs on a validation curve whose minimum is at epoch 3.
pub fn scripted_early_stop() -> (Option<usize>, Option<usize>) {
    let curve = [5.0, 4.0, 3.0, 3.5, 3.2, 3.1, 3.0, 3.4, 2.9];
    let mut s = EarlyStopper::new(5);
    let mut stopped = None;
    for (e, &l) in curve.iter().enumerate() {
        if s.observe(e + 1, l) == StopDecision::Stop {
            stopped = Some(e + 1);
            break;
        }
    }
    (s.best_epoch(), stopped)
}
