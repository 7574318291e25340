use std::fmt::Write as _;

use rand::seq::SliceRandom;

use super::network::{Example, MicroModel};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Matrix;
use crate::wholeword::{Task, WholeWordScheme};

/// Learning-rate multiplier for the final decoder norm, whose gain starts small.
const OUT_GAIN_LR: f64 = 30.0;

/// Adam with decoupled weight decay. Normalization gains are not decayed and
/// the final decoder gain moves `OUT_GAIN_LR` times faster.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    decay: Vec<bool>,
    lr_scale: Vec<f64>,
    t: u32,
}

impl AdamW {
    pub fn new(model: &MicroModel, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: model.params.zeros_like(),
            v: model.params.zeros_like(),
            decay: model
                .params
                .names()
                .iter()
                .map(|n| !n.contains("norm"))
                .collect(),
            lr_scale: model
                .params
                .names()
                .iter()
                .map(|n| if n == "dec.norm" { OUT_GAIN_LR } else { 1.0 })
                .collect(),
            t: 0,
        }
    }

    pub fn step(&mut self, model: &mut MicroModel, grads: &[Matrix]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, p) in model.params.values_mut().iter_mut().enumerate() {
            let wd = if self.decay[i] {
                self.weight_decay
            } else {
                0.0
            };
            let lr = self.lr * self.lr_scale[i];
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (k, (w, g)) in p.data_mut().iter_mut().zip(grads[i].data()).enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                let update = (m[k] / bc1) / ((v[k] / bc2).sqrt() + self.eps);
                *w -= lr * (update + wd * *w);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Patience-based early stopping on a validation loss.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    since_best: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = Some(epoch);
            self.since_best = 0;
            return StopDecision::Improved;
        }
        self.since_best += 1;
        if self.since_best >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            lr: 0.01,
            weight_decay: 0.01,
            patience: 5,
            seed: 0,
        }
    }
}

/// One task's training and validation pairs and the whole-word scheme it uses.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub task: Task,
    pub scheme: WholeWordScheme,
    pub train: Vec<Example>,
    pub val: Vec<Example>,
}

/// A single-task slice of one epoch's shuffled training pairs.
#[derive(Debug, Clone)]
pub struct TrainBatch<'a> {
    pub task: usize,
    pub examples: Vec<&'a Example>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    /// Task name, prefixed `val_` for validation losses; `val_total` sums them.
    pub task: String,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub curve: Vec<LossRecord>,
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl TrainOutcome {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,task,loss\n");
        for r in &self.curve {
            let _ = writeln!(out, "{},{},{}", r.epoch, r.task, r.loss);
        }
        out
    }
}

/// Round-robin schedule: round `r` holds batch `r` of every task that still has one.
pub fn alternating_batches<'a>(
    data: &'a [TaskData],
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Vec<TrainBatch<'a>> {
    let mut per_task: Vec<Vec<TrainBatch<'a>>> = Vec::with_capacity(data.len());
    for (t, d) in data.iter().enumerate() {
        let mut order: Vec<&Example> = d.train.iter().collect();
        order.shuffle(&mut rng::substream(
            seed,
            rng::SHUFFLE,
            (epoch * 16 + t) as u64,
        ));
        per_task.push(
            order
                .chunks(batch_size.max(1))
                .map(|c| TrainBatch {
                    task: t,
                    examples: c.to_vec(),
                })
                .collect(),
        );
    }
    let rounds = per_task.iter().map(Vec::len).max().unwrap_or(0);
    let mut iters: Vec<_> = per_task.into_iter().map(Vec::into_iter).collect();
    let mut out = Vec::new();
    for _ in 0..rounds {
        for it in &mut iters {
            if let Some(b) = it.next() {
                out.push(b);
            }
        }
    }
    out
}

/// Train with alternating task batches, keeping the parameters of the
/// epoch with the lowest summed validation loss.
pub fn train(model: &mut MicroModel, data: &[TaskData], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut outcome = TrainOutcome {
        curve: Vec::new(),
        epochs_run: 0,
        best_epoch: None,
        stopped_early: false,
    };
    if cfg.epochs == 0 {
        return Ok(outcome);
    }
    let mut opt = AdamW::new(model, cfg.lr, cfg.weight_decay);
    let mut stopper = EarlyStopper::new(cfg.patience.max(1));
    let mut best_params = None;
    let mut initial: Vec<Option<f64>> = vec![None; data.len()];
    let has_val = data.iter().any(|d| !d.val.is_empty());

    for epoch in 1..=cfg.epochs {
        let mut sums = vec![(0.0, 0usize); data.len()];
        for batch in alternating_batches(data, cfg.batch_size, cfg.seed, epoch) {
            let d = &data[batch.task];
            let (loss, grads) = model.batch_grads(&batch.examples, &d.scheme)?;
            let first = *initial[batch.task].get_or_insert(loss);
            if loss > 10.0 * first {
                return Err(Error::Numeric(format!(
                    "training diverged on {}: loss {loss:.4} > 10x initial {first:.4}",
                    d.task
                )));
            }
            opt.step(model, &grads);
            if !model.is_finite() {
                return Err(Error::Numeric("non-finite parameters after update".into()));
            }
            sums[batch.task].0 += loss * batch.examples.len() as f64;
            sums[batch.task].1 += batch.examples.len();
        }
        for (d, (s, n)) in data.iter().zip(&sums) {
            if *n > 0 {
                outcome.curve.push(LossRecord {
                    epoch,
                    task: d.task.name().to_string(),
                    loss: s / *n as f64,
                });
            }
        }
        outcome.epochs_run = epoch;
        if !has_val {
            continue;
        }
        let mut total = 0.0;
        for d in data.iter().filter(|d| !d.val.is_empty()) {
            let v = model.forward_loss(&d.val, &d.scheme)?;
            total += v;
            outcome.curve.push(LossRecord {
                epoch,
                task: format!("val_{}", d.task.name()),
                loss: v,
            });
        }
        outcome.curve.push(LossRecord {
            epoch,
            task: "val_total".into(),
            loss: total,
        });
        match stopper.observe(epoch, total) {
            StopDecision::Improved => best_params = Some(model.params.clone()),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                outcome.stopped_early = true;
                break;
            }
        }
    }
    if let Some(p) = best_params {
        model.params = p;
    }
    outcome.best_epoch = stopper.best_epoch();
    Ok(outcome)
}
