//! End-to-end experiment plumbing: splits → graph → Ω → training data →
//! model → metrics.

use std::sync::Arc;

use rand::seq::SliceRandom;

use crate::config::RunConfig;
use crate::error::Result;
use crate::eval::{collect_rankings, item_target, MetricReport, ModelRecommender, Rankings};
use crate::ingest::{
    build_graph, make_splits, sample_direct_candidates, sample_negatives, InteractionLog,
    SplitDataset,
};
use crate::model::{train, Example, MicroModel, TaskData, TrainOutcome};
use crate::propagation::{random_feature_propagation, OmegaTable};
use crate::rng;
use crate::wholeword::{
    build_direct_prompt, build_explanation_prompt, build_sequential_prompt, Entity,
    IncrementalTable, SchemeMode, Task, Vocab, WholeWordScheme,
};

/// Everything derived from the interaction log before training.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub splits: SplitDataset,
    pub omega: Arc<OmegaTable>,
    pub incremental: Arc<IncrementalTable>,
}

/// Splits with evaluation candidates, Ω from the training graph, and an
/// incremental table sized for the longest test-time history.
pub fn prepare(log: &InteractionLog, cfg: &RunConfig) -> Result<Prepared> {
    let splits = make_splits(log, cfg.min_len)?;
    let splits = sample_direct_candidates(splits, cfg.negatives, cfg.seed)?;
    let omega = Arc::new(random_feature_propagation(
        &build_graph(&splits),
        &cfg.propagation_config(),
    )?);
    Ok(with_omega(splits, omega, cfg))
}

pub fn with_omega(splits: SplitDataset, omega: Arc<OmegaTable>, cfg: &RunConfig) -> Prepared {
    // test prompts hold train + val items plus the user; row 0 is reserved
    let max_index = splits.max_train_len() + 3;
    let incremental = Arc::new(IncrementalTable::random(
        max_index, cfg.d_n, cfg.sigma, cfg.seed,
    ));
    Prepared {
        splits,
        omega,
        incremental,
    }
}

impl Prepared {
    pub fn scheme(&self, mode: SchemeMode, seed: u64) -> WholeWordScheme {
        match mode {
            SchemeMode::GraphAware => WholeWordScheme::GraphAware(self.omega.clone()),
            SchemeMode::Incremental => WholeWordScheme::Incremental(self.incremental.clone()),
            SchemeMode::RandomIndex => WholeWordScheme::RandomIndex {
                table: self.incremental.clone(),
                seed,
            },
            SchemeMode::Uniform => WholeWordScheme::Uniform(Arc::new(self.omega.omega0.clone())),
        }
    }
}

fn example(prompt: crate::wholeword::TokenizedPrompt, target: Vec<u32>) -> Example {
    Example { prompt, target }
}

/// Direct-task pairs: every training item and the validation item, each
/// hidden among `negatives` sampled non-interacted items. Training items are
/// repeated `views` times with fresh negatives so the position of the target
/// in a fixed candidate list cannot be memorized.
pub fn direct_examples(
    vocab: &Vocab,
    splits: &SplitDataset,
    negatives: usize,
    views: usize,
    seed: u64,
) -> Result<(Vec<Example>, Vec<Example>)> {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for u in &splits.users {
        let mut r = rng::substream(seed, "direct-train", u.user as u64);
        let seen = u.interacted();
        let targets = u
            .train
            .iter()
            .flat_map(|&t| std::iter::repeat_n((t, false), views))
            .chain(std::iter::once((u.val, true)));
        for (target, is_val) in targets {
            let mut cands = sample_negatives(&mut r, splits.num_items, &seen, negatives, u.user)?;
            cands.push(target);
            cands.shuffle(&mut r);
            let ex = example(
                build_direct_prompt(vocab, u.user, &cands)?,
                item_target(vocab, target),
            );
            if is_val {
                val.push(ex);
            } else {
                train.push(ex);
            }
        }
    }
    Ok((train, val))
}

/// Sequential pairs: each training prefix predicts its next item; the full
/// training sequence predicts the validation item.
pub fn sequential_examples(
    vocab: &Vocab,
    splits: &SplitDataset,
) -> Result<(Vec<Example>, Vec<Example>)> {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for u in &splits.users {
        for t in 1..u.train.len() {
            train.push(example(
                build_sequential_prompt(vocab, u.user, &u.train[..t])?,
                item_target(vocab, u.train[t]),
            ));
        }
        val.push(example(
            build_sequential_prompt(vocab, u.user, &u.train)?,
            item_target(vocab, u.val),
        ));
    }
    Ok((train, val))
}

/// Copy-task stand-in for explanation generation: reproduce the user and item ids.
pub fn explanation_examples(vocab: &Vocab, splits: &SplitDataset) -> (Vec<Example>, Vec<Example>) {
    let target = |user: u32, item: u32| {
        let mut t = vocab.encode_id(Entity::User(user));
        t.extend(vocab.encode_id(Entity::Item(item)));
        t.push(Vocab::EOS);
        t
    };
    let mut train = Vec::new();
    let mut val = Vec::new();
    for u in &splits.users {
        for &i in &u.train {
            train.push(example(
                build_explanation_prompt(vocab, u.user, i),
                target(u.user, i),
            ));
        }
        val.push(example(
            build_explanation_prompt(vocab, u.user, u.val),
            target(u.user, u.val),
        ));
    }
    (train, val)
}

/// The scheme a task uses under `cfg`; explanation shares the direct scheme.
pub fn task_scheme(prep: &Prepared, cfg: &RunConfig, task: Task) -> WholeWordScheme {
    let mode = match task {
        Task::Sequential => cfg.sequential_scheme,
        _ => cfg.direct_scheme,
    };
    prep.scheme(mode, cfg.seed)
}

pub fn task_data(prep: &Prepared, cfg: &RunConfig, vocab: &Vocab, task: Task) -> Result<TaskData> {
    let (train, val) = match task {
        Task::Direct => direct_examples(
            vocab,
            &prep.splits,
            cfg.train_negatives,
            cfg.train_views,
            cfg.seed,
        )?,
        Task::Sequential => sequential_examples(vocab, &prep.splits)?,
        Task::Explanation => explanation_examples(vocab, &prep.splits),
    };
    Ok(TaskData {
        task,
        scheme: task_scheme(prep, cfg, task),
        train,
        val,
    })
}

/// Build and train a model on `cfg.tasks`.
pub fn train_model(prep: &Prepared, cfg: &RunConfig) -> Result<(MicroModel, TrainOutcome)> {
    let vocab = Vocab::new();
    let data: Vec<TaskData> = cfg
        .tasks
        .iter()
        .map(|&t| task_data(prep, cfg, &vocab, t))
        .collect::<Result<_>>()?;
    let mut model = MicroModel::new(cfg.model_config(), vocab)?;
    let outcome = train(&mut model, &data, &cfg.train_config())?;
    Ok((model, outcome))
}

/// Raw test rankings for one task, before reranking.
pub fn rankings(
    prep: &Prepared,
    model: &MicroModel,
    cfg: &RunConfig,
    task: Task,
) -> Result<Rankings> {
    let scheme = task_scheme(prep, cfg, task);
    let rec = ModelRecommender {
        model,
        scheme: &scheme,
        max_len: cfg.max_decode,
    };
    let max_k = cfg.ks.iter().copied().max().unwrap_or(0);
    collect_rankings(
        &rec,
        &prep.splits,
        task,
        cfg.beams.max(max_k + cfg.rerank_n),
    )
}

pub fn evaluate(
    prep: &Prepared,
    model: &MicroModel,
    cfg: &RunConfig,
    task: Task,
) -> Result<MetricReport> {
    rankings(prep, model, cfg, task)?.report(&cfg.ks, cfg.rerank_n)
}
