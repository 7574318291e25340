//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, TrainConfig};
use crate::propagation::PropagationConfig;
use crate::wholeword::{SchemeMode, Task};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub alpha: f64,
    pub sigma: f64,
    /// Propagation depth `L`.
    pub layers: usize,
    /// Extra reranking candidates `N`.
    pub rerank_n: usize,
    pub ks: Vec<usize>,
    pub d_n: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub beams: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub patience: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Negatives per evaluation candidate list.
    pub negatives: usize,
    /// Negatives per training direct prompt.
    pub train_negatives: usize,
    /// Copies of each direct training pair, each with fresh negatives.
    pub train_views: usize,
    pub min_len: usize,
    /// Longest generated token sequence.
    pub max_decode: usize,
    pub tasks: Vec<Task>,
    pub direct_scheme: SchemeMode,
    pub sequential_scheme: SchemeMode,
    pub data_path: Option<PathBuf>,
    pub omega_path: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            alpha: 5.0,
            sigma: 5.0,
            layers: 4,
            rerank_n: 10,
            ks: vec![5, 10],
            d_n: 64,
            heads: 4,
            d_ff: 128,
            enc_layers: 2,
            dec_layers: 2,
            beams: 20,
            lr: 0.01,
            weight_decay: 0.01,
            batch: 64,
            patience: 5,
            epochs: 20,
            seed: 0,
            negatives: 99,
            train_negatives: 19,
            train_views: 1,
            min_len: 5,
            max_decode: 8,
            tasks: vec![Task::Direct, Task::Sequential, Task::Explanation],
            direct_scheme: SchemeMode::GraphAware,
            sequential_scheme: SchemeMode::Incremental,
            data_path: None,
            omega_path: None,
            model_path: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            c.set(k.trim(), v.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "alpha" => self.alpha = parse_num(key, v)?,
            "sigma" => self.sigma = parse_num(key, v)?,
            "layers" => self.layers = parse_num(key, v)?,
            "rerank_n" => self.rerank_n = parse_num(key, v)?,
            "ks" => {
                self.ks = v
                    .split(',')
                    .map(|s| parse_num(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "d_n" => self.d_n = parse_num(key, v)?,
            "heads" => self.heads = parse_num(key, v)?,
            "d_ff" => self.d_ff = parse_num(key, v)?,
            "enc_layers" => self.enc_layers = parse_num(key, v)?,
            "dec_layers" => self.dec_layers = parse_num(key, v)?,
            "beams" => self.beams = parse_num(key, v)?,
            "lr" => self.lr = parse_num(key, v)?,
            "weight_decay" => self.weight_decay = parse_num(key, v)?,
            "batch" => self.batch = parse_num(key, v)?,
            "patience" => self.patience = parse_num(key, v)?,
            "epochs" => self.epochs = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "negatives" => self.negatives = parse_num(key, v)?,
            "train_negatives" => self.train_negatives = parse_num(key, v)?,
            "train_views" => self.train_views = parse_num(key, v)?,
            "min_len" => self.min_len = parse_num(key, v)?,
            "max_decode" => self.max_decode = parse_num(key, v)?,
            "tasks" => {
                self.tasks = v
                    .split(',')
                    .map(|s| {
                        Task::parse(s.trim())
                            .ok_or_else(|| Error::Config(format!("unknown task `{s}`")))
                    })
                    .collect::<Result<_>>()?
            }
            "direct_scheme" | "sequential_scheme" => {
                let m = SchemeMode::parse(v)
                    .ok_or_else(|| Error::Config(format!("unknown scheme `{v}`")))?;
                if key == "direct_scheme" {
                    self.direct_scheme = m;
                } else {
                    self.sequential_scheme = m;
                }
            }
            "data_path" => self.data_path = Some(v.into()),
            "omega_path" => self.omega_path = Some(v.into()),
            "model_path" => self.model_path = Some(v.into()),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be positive");
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return bad("ks must be a non-empty list of positive integers");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.weight_decay < 0.0 {
            return bad("lr must be positive and weight_decay non-negative");
        }
        if self.batch == 0 || self.patience == 0 || self.train_views == 0 {
            return bad("batch, patience and train_views must be positive");
        }
        if self.min_len < 3 {
            return bad("min_len must be at least 3");
        }
        if self.max_decode == 0 {
            return bad("max_decode must be positive");
        }
        if self.tasks.is_empty() {
            return bad("tasks must not be empty");
        }
        self.model_config().validate()?;
        self.propagation_config().validate()
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            d_n: self.d_n,
            heads: self.heads,
            d_ff: self.d_ff,
            enc_layers: self.enc_layers,
            dec_layers: self.dec_layers,
            alpha: self.alpha,
            beams: self.beams,
            seed: self.seed,
        }
    }

    pub fn propagation_config(&self) -> PropagationConfig {
        PropagationConfig {
            sigma: self.sigma,
            layers: self.layers,
            dim: self.d_n,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            lr: self.lr,
            weight_decay: self.weight_decay,
            patience: self.patience,
            seed: self.seed,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("alpha", format!("{:?}", self.alpha));
        kv("sigma", format!("{:?}", self.sigma));
        kv("layers", self.layers.to_string());
        kv("rerank_n", self.rerank_n.to_string());
        kv("ks", join(&self.ks));
        kv("d_n", self.d_n.to_string());
        kv("heads", self.heads.to_string());
        kv("d_ff", self.d_ff.to_string());
        kv("enc_layers", self.enc_layers.to_string());
        kv("dec_layers", self.dec_layers.to_string());
        kv("beams", self.beams.to_string());
        kv("lr", format!("{:?}", self.lr));
        kv("weight_decay", format!("{:?}", self.weight_decay));
        kv("batch", self.batch.to_string());
        kv("patience", self.patience.to_string());
        kv("epochs", self.epochs.to_string());
        kv("seed", self.seed.to_string());
        kv("negatives", self.negatives.to_string());
        kv("train_negatives", self.train_negatives.to_string());
        kv("train_views", self.train_views.to_string());
        kv("min_len", self.min_len.to_string());
        kv("max_decode", self.max_decode.to_string());
        kv(
            "tasks",
            join(&self.tasks.iter().map(|t| t.name()).collect::<Vec<_>>()),
        );
        kv("direct_scheme", self.direct_scheme.name().into());
        kv("sequential_scheme", self.sequential_scheme.name().into());
        for (k, p) in [
            ("data_path", &self.data_path),
            ("omega_path", &self.omega_path),
            ("model_path", &self.model_path),
        ] {
            if let Some(p) = p {
                kv(k, p.display().to_string());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_sports_direct_settings() {
        let c = RunConfig::default();
        assert_eq!((c.alpha, c.sigma, c.rerank_n, c.layers), (5.0, 5.0, 10, 4));
        assert_eq!(
            (c.lr, c.batch, c.beams, c.patience, c.negatives),
            (0.01, 64, 20, 5, 99)
        );
    }

    #[test]
    fn text_round_trip() {
        let c = RunConfig {
            alpha: 0.1 + 0.2,
            ks: vec![1, 5, 20],
            tasks: vec![Task::Sequential],
            sequential_scheme: SchemeMode::RandomIndex,
            data_path: Some("/tmp/x y.tsv".into()),
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn unknown_key_and_bad_values_rejected() {
        assert!(matches!(
            RunConfig::parse("alpah = 1"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::parse("alpha = x"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::parse("heads = 5"),
            Err(Error::Config(_))
        ));
        assert!(matches!(RunConfig::parse("ks = 0"), Err(Error::Config(_))));
        assert!(RunConfig::parse("# comment\n\nalpha = 2 # trailing\n").is_ok());
    }
}
