//! `graphword` command-line front end.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::ingest::{
    build_graph, make_splits, parse_interactions, read_split_manifest, sample_direct_candidates,
    write_split_manifest, SplitDataset,
};
use crate::io::{read_embedding, write_embedding};
use crate::model::{load_checkpoint, save_checkpoint};
use crate::pipeline::{self, Prepared};
use crate::propagation::{random_feature_propagation, OmegaTable};
use crate::rank_analysis::{run_rank_trials, trials_to_csv, RankExperiment};
use crate::synth::{synth_corpus, SynthConfig};
use crate::tensor::Matrix;
use crate::wholeword::Task;

pub const SPLITS_FILE: &str = "splits.tsv";
pub const EDGES_FILE: &str = "edges.tsv";
pub const IDS_FILE: &str = "ids.tsv";

#[derive(Debug, Parser)]
#[command(
    name = "graphword",
    version,
    about = "Graph-aware whole-word embeddings for generative recommendation"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration file (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Configuration override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a block-structured synthetic interaction log.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        blocks: usize,
        #[arg(long, default_value_t = 200)]
        users: usize,
        #[arg(long, default_value_t = 100)]
        items: usize,
    },
    /// Split a log and write the split manifest, training edges and id table.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Propagate random features over the training graph and write Ω.
    Propagate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; also writes `<out>.loss.csv`.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        omega: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a trained model on the test split.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        omega: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "sequential")]
        task: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Numerical rank of attention matrices with and without whole-word vectors.
    RankCheck {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 6)]
        d_x: usize,
        #[arg(long, default_value_t = 32)]
        d_p: usize,
        #[arg(long, default_value_t = 16)]
        d_n: usize,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Write Ω as `entity<TAB>values` lines.
    Export {
        #[arg(long)]
        omega: PathBuf,
        /// Ingest directory; its id table maps rows back to raw ids.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::parse(&fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("`--set {kv}`: expected KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn read_splits(dir: &Path) -> Result<SplitDataset> {
    read_split_manifest(&fs::read_to_string(dir.join(SPLITS_FILE))?)
}

/// Writes Ω and, beside it, `ω₀` as a one-row file `<path>.omega0`.
pub fn write_omega(path: &Path, omega: &OmegaTable) -> Result<()> {
    write_embedding(path, &omega.rows)?;
    let w0 = Matrix::from_vec(1, omega.omega0.len(), omega.omega0.clone())?;
    write_embedding(&sibling(path, ".omega0"), &w0)
}

pub fn read_omega(path: &Path, splits: &SplitDataset) -> Result<OmegaTable> {
    let rows = read_embedding(path)?;
    let w0 = read_embedding(&sibling(path, ".omega0"))?;
    if rows.rows() != splits.num_users + splits.num_items {
        return Err(Error::Format(format!(
            "Ω has {} rows, the splits need {}",
            rows.rows(),
            splits.num_users + splits.num_items
        )));
    }
    if w0.rows() != 1 || w0.cols() != rows.cols() {
        return Err(Error::Format("ω₀ must be one row as wide as Ω".into()));
    }
    Ok(OmegaTable {
        num_users: splits.num_users,
        num_items: splits.num_items,
        rows,
        omega0: w0.into_data(),
    })
}

fn load_prepared(data: &Path, omega: &Path, cfg: &RunConfig) -> Result<Prepared> {
    let splits = read_splits(data)?;
    let omega = read_omega(omega, &splits)?;
    if omega.dim() != cfg.d_n {
        return Err(Error::Config(format!(
            "Ω width {} differs from d_n = {}",
            omega.dim(),
            cfg.d_n
        )));
    }
    Ok(pipeline::with_omega(splits, Arc::new(omega), cfg))
}

fn raw_ids(text: &str) -> Result<(Vec<String>, Vec<String>)> {
    let (mut users, mut items) = (Vec::new(), Vec::new());
    for (n, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split('\t').collect();
        let bad = || Error::Parse {
            line: n + 1,
            msg: "expected kind<TAB>dense<TAB>raw".into(),
        };
        if f.len() != 3 {
            return Err(bad());
        }
        let dense: usize = f[1].parse().map_err(|_| bad())?;
        let list = match f[0] {
            "user" => &mut users,
            "item" => &mut items,
            _ => return Err(bad()),
        };
        if dense != list.len() {
            return Err(bad());
        }
        list.push(f[2].to_string());
    }
    Ok((users, items))
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Synth {
            out,
            blocks,
            users,
            items,
        } => {
            let c = synth_corpus(&SynthConfig {
                blocks,
                users,
                items,
                seed: cfg.seed,
                ..Default::default()
            })?;
            write(&out, &c.to_tsv())
        }
        Command::Ingest { input, out } => {
            let log = parse_interactions(&input)?;
            let splits = make_splits(&log, cfg.min_len)?;
            let splits = sample_direct_candidates(splits, cfg.negatives, cfg.seed)?;
            fs::create_dir_all(&out)?;
            write(&out.join(SPLITS_FILE), &write_split_manifest(&splits))?;
            write(
                &out.join(EDGES_FILE),
                &build_graph(&splits).to_edge_list_tsv(),
            )?;
            write(&out.join(IDS_FILE), &log.id_table_tsv())
        }
        Command::Propagate { data, out } => {
            let splits = read_splits(&data)?;
            let omega =
                random_feature_propagation(&build_graph(&splits), &cfg.propagation_config())?;
            write_omega(&out, &omega)
        }
        Command::Train { data, omega, out } => {
            let prep = load_prepared(&data, &omega, &cfg)?;
            let (model, outcome) = pipeline::train_model(&prep, &cfg)?;
            save_checkpoint(&out, &model)?;
            write(&sibling(&out, ".loss.csv"), &outcome.to_csv())
        }
        Command::Eval {
            data,
            omega,
            model,
            task,
            out,
        } => {
            let task = Task::parse(&task)
                .ok_or_else(|| Error::Config(format!("unknown task `{task}`")))?;
            let prep = load_prepared(&data, &omega, &cfg)?;
            let model = load_checkpoint(&model)?;
            let report = pipeline::evaluate(&prep, &model, &cfg, task)?;
            print!("{}", report.to_table());
            write(&out, &report.to_csv())
        }
        Command::RankCheck {
            out,
            n,
            d_x,
            d_p,
            d_n,
            trials,
        } => {
            let exp = RankExperiment {
                n,
                d_x,
                d_p,
                d_n,
                trials,
                ..Default::default()
            };
            write(&out, &trials_to_csv(&run_rank_trials(&exp, cfg.seed)?))
        }
        Command::Export { omega, data, out } => {
            let splits = read_splits(&data)?;
            let table = read_omega(&omega, &splits)?;
            let (users, items) = raw_ids(&fs::read_to_string(data.join(IDS_FILE))?)?;
            if users.len() != table.num_users || items.len() != table.num_items {
                return Err(Error::Format("id table does not match Ω".into()));
            }
            let mut text = String::new();
            let named = users
                .iter()
                .map(|u| format!("user_{u}"))
                .chain(items.iter().map(|i| format!("item_{i}")));
            for (name, row) in named.zip(table.rows.iter_rows()) {
                let vals: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                let _ = writeln!(text, "{name}\t{}", vals.join(" "));
            }
            write(&out, &text)
        }
    }
}

/// Caps the global thread pool at `GRAPHWORD_THREADS` when set.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("GRAPHWORD_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Config(format!("GRAPHWORD_THREADS=`{v}` is not a count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}
