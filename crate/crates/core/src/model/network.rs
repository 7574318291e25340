use rayon::prelude::*;

use super::config::ModelConfig;
use super::tape::{log_softmax_rows, Tape, Var};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Matrix;
use crate::wholeword::{lookup_wholeword, TokenizedPrompt, Vocab, WholeWordScheme, PROMPT_LEN};

const REL_BUCKETS: usize = 32;
const REL_MAX_DISTANCE: usize = 128;
const EMBED_STD: f64 = 1.0;
/// Initial gain of the final decoder norm; keeps untrained logits near uniform.
const OUT_GAIN: f64 = 0.15;

/// One prompt and its target token sequence (ending in `</s>`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub prompt: TokenizedPrompt,
    pub target: Vec<u32>,
}

/// Named trainable matrices in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamStore {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.index(name).map(|i| &self.values[i])
    }

    pub fn zeros_like(&self) -> Vec<Matrix> {
        self.values
            .iter()
            .map(|m| Matrix::zeros(m.rows(), m.cols()))
            .collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|m| m.data().len()).sum()
    }

    pub fn from_parts(names: Vec<String>, values: Vec<Matrix>) -> Result<Self> {
        if names.len() != values.len() {
            return Err(Error::shape("parameter names and values differ in count"));
        }
        Ok(Self { names, values })
    }
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Normal(f64),
    Const(f64),
    Zeros,
}

#[derive(Debug, Clone)]
struct Spec {
    name: String,
    rows: usize,
    cols: usize,
    init: Init,
}

#[derive(Default)]
struct Layout {
    specs: Vec<Spec>,
}

impl Layout {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> usize {
        self.specs.push(Spec {
            name,
            rows,
            cols,
            init,
        });
        self.specs.len() - 1
    }
}

#[derive(Debug, Clone, Copy)]
struct AttnIds {
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
}

#[derive(Debug, Clone, Copy)]
struct FfnIds {
    w1: usize,
    w2: usize,
}

#[derive(Debug, Clone, Copy)]
struct EncLayer {
    norm_attn: usize,
    attn: AttnIds,
    norm_ffn: usize,
    ffn: FfnIds,
}

#[derive(Debug, Clone, Copy)]
struct DecLayer {
    norm_self: usize,
    self_attn: AttnIds,
    norm_cross: usize,
    cross: AttnIds,
    norm_ffn: usize,
    ffn: FfnIds,
}

#[derive(Debug, Clone)]
struct Ids {
    tok: usize,
    prompt: usize,
    enc_bias: usize,
    enc: Vec<EncLayer>,
    enc_norm: usize,
    dec_bias: usize,
    dec: Vec<DecLayer>,
    dec_norm: usize,
}

fn layout(cfg: &ModelConfig, vocab_len: usize) -> (Ids, Vec<Spec>) {
    let d = cfg.d_n;
    let w = Init::Normal(1.0 / (d as f64).sqrt());
    let mut l = Layout::default();
    let attn = |l: &mut Layout, p: &str| AttnIds {
        wq: l.add(format!("{p}.wq"), d, d, w),
        wk: l.add(format!("{p}.wk"), d, d, w),
        wv: l.add(format!("{p}.wv"), d, d, w),
        wo: l.add(format!("{p}.wo"), d, d, w),
    };
    let ffn = |l: &mut Layout, p: &str| FfnIds {
        w1: l.add(format!("{p}.w1"), d, cfg.d_ff, w),
        w2: l.add(
            format!("{p}.w2"),
            cfg.d_ff,
            d,
            Init::Normal(1.0 / (cfg.d_ff as f64).sqrt()),
        ),
    };
    let tok = l.add("tok_emb".into(), vocab_len, d, Init::Normal(EMBED_STD));
    let prompt = l.add("prompt".into(), 3 * PROMPT_LEN, d, Init::Normal(EMBED_STD));
    let enc_bias = l.add("enc.rel_bias".into(), REL_BUCKETS, cfg.heads, Init::Zeros);
    let enc = (0..cfg.enc_layers)
        .map(|i| EncLayer {
            norm_attn: l.add(format!("enc.{i}.norm_attn"), 1, d, Init::Const(1.0)),
            attn: attn(&mut l, &format!("enc.{i}.attn")),
            norm_ffn: l.add(format!("enc.{i}.norm_ffn"), 1, d, Init::Const(1.0)),
            ffn: ffn(&mut l, &format!("enc.{i}.ffn")),
        })
        .collect();
    let enc_norm = l.add("enc.norm".into(), 1, d, Init::Const(1.0));
    let dec_bias = l.add("dec.rel_bias".into(), REL_BUCKETS, cfg.heads, Init::Zeros);
    let dec = (0..cfg.dec_layers)
        .map(|i| DecLayer {
            norm_self: l.add(format!("dec.{i}.norm_self"), 1, d, Init::Const(1.0)),
            self_attn: attn(&mut l, &format!("dec.{i}.self")),
            norm_cross: l.add(format!("dec.{i}.norm_cross"), 1, d, Init::Const(1.0)),
            cross: attn(&mut l, &format!("dec.{i}.cross")),
            norm_ffn: l.add(format!("dec.{i}.norm_ffn"), 1, d, Init::Const(1.0)),
            ffn: ffn(&mut l, &format!("dec.{i}.ffn")),
        })
        .collect();
    let dec_norm = l.add("dec.norm".into(), 1, d, Init::Const(OUT_GAIN));
    let ids = Ids {
        tok,
        prompt,
        enc_bias,
        enc,
        enc_norm,
        dec_bias,
        dec,
        dec_norm,
    };
    (ids, l.specs)
}

/// T5 relative-position bucket for `key - query = rel`.
pub fn relative_bucket(rel: i64, bidirectional: bool) -> usize {
    let mut buckets = REL_BUCKETS;
    let mut base = 0;
    let mut n = -rel;
    if bidirectional {
        buckets /= 2;
        if n < 0 {
            base = buckets;
        }
        n = n.abs();
    } else {
        n = n.max(0);
    }
    let n = n as usize;
    let exact = buckets / 2;
    if n < exact {
        return base + n;
    }
    let log_ratio = (n as f64 / exact as f64).ln() / (REL_MAX_DISTANCE as f64 / exact as f64).ln();
    let large = exact + (log_ratio * (buckets - exact) as f64) as usize;
    base + large.min(buckets - 1)
}

fn bucket_index(q_len: usize, k_len: usize, bidirectional: bool) -> Vec<usize> {
    let mut idx = Vec::with_capacity(q_len * k_len);
    for i in 0..q_len {
        for j in 0..k_len {
            idx.push(relative_bucket(j as i64 - i as i64, bidirectional));
        }
    }
    idx
}

fn causal_mask(n: usize) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            m.row_mut(i)[j] = f64::NEG_INFINITY;
        }
    }
    m
}

/// Encoder-decoder transformer with whole-word vectors added at the encoder input.
#[derive(Debug, Clone)]
pub struct MicroModel {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
    ids: Ids,
}

/// Encoder output projected into every decoder layer's cross-attention keys and values.
#[derive(Debug, Clone)]
pub struct Memory {
    kv: Vec<(Var, Var)>,
}

/// A tape with bound parameters and an encoded prompt, reusable across
/// many decoder passes.
pub struct Session<'m> {
    model: &'m MicroModel,
    tape: Tape,
    params: Vec<Var>,
    memory: Memory,
    base: usize,
}

impl Session<'_> {
    /// Log-probabilities over the vocabulary for the token after `prefix`
    /// (decoder start token is implied).
    pub fn next_log_probs(&mut self, prefix: &[u32]) -> Vec<f64> {
        let mut input = vec![Vocab::PAD];
        input.extend_from_slice(prefix);
        let logits = self
            .model
            .decode(&mut self.tape, &self.params, &self.memory, &input);
        let last = self.tape.value(logits).row(input.len() - 1).to_vec();
        self.tape.truncate(self.base);
        let m = Matrix::from_vec(1, last.len(), last).expect("row");
        log_softmax_rows(&m).into_data()
    }

    /// Mean per-token log-probability of `target` under teacher forcing.
    pub fn sequence_score(&mut self, target: &[u32]) -> f64 {
        let mut input = vec![Vocab::PAD];
        input.extend_from_slice(&target[..target.len() - 1]);
        let logits = self
            .model
            .decode(&mut self.tape, &self.params, &self.memory, &input);
        let logp = log_softmax_rows(self.tape.value(logits));
        self.tape.truncate(self.base);
        target
            .iter()
            .enumerate()
            .map(|(i, &t)| logp[(i, t as usize)])
            .sum::<f64>()
            / target.len() as f64
    }
}

impl MicroModel {
    pub fn new(config: ModelConfig, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        let (ids, specs) = layout(&config, vocab.len());
        let mut r = rng::stream(config.seed, rng::MODEL);
        let mut names = Vec::with_capacity(specs.len());
        let mut values = Vec::with_capacity(specs.len());
        for s in specs {
            let m = match s.init {
                Init::Normal(std) => Matrix::random_normal(s.rows, s.cols, std, &mut r),
                Init::Zeros => Matrix::zeros(s.rows, s.cols),
                Init::Const(c) => Matrix::from_vec(s.rows, s.cols, vec![c; s.rows * s.cols])?,
            };
            names.push(s.name);
            values.push(m);
        }
        Ok(Self {
            config,
            vocab,
            params: ParamStore { names, values },
            ids,
        })
    }

    /// Rebuild around stored parameters; names and shapes must match the layout.
    pub fn from_params(config: ModelConfig, vocab: Vocab, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let (ids, specs) = layout(&config, vocab.len());
        if specs.len() != params.len() {
            return Err(Error::Format(format!(
                "expected {} parameter blocks, found {}",
                specs.len(),
                params.len()
            )));
        }
        for (s, (n, v)) in specs.iter().zip(params.names.iter().zip(&params.values)) {
            if &s.name != n || v.shape() != (s.rows, s.cols) {
                return Err(Error::Format(format!(
                    "parameter `{n}` {:?} does not match `{}` ({}, {})",
                    v.shape(),
                    s.name,
                    s.rows,
                    s.cols
                )));
            }
        }
        Ok(Self {
            config,
            vocab,
            params,
            ids,
        })
    }

    fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params
            .values
            .iter()
            .enumerate()
            .map(|(i, m)| tape.param(i, m.clone()))
            .collect()
    }

    fn input_embedding(
        &self,
        tape: &mut Tape,
        p: &[Var],
        prompt: &TokenizedPrompt,
        xw: &Matrix,
    ) -> Var {
        let slots: Vec<Option<usize>> = prompt
            .tokens
            .iter()
            .map(|&t| self.vocab.as_prompt_slot(t))
            .collect();
        let tok_idx = prompt
            .tokens
            .iter()
            .zip(&slots)
            .map(|(&t, s)| s.is_none().then_some(t as usize))
            .collect();
        let tok = tape.gather_rows(p[self.ids.tok], tok_idx);
        let x = if slots.iter().any(Option::is_some) {
            let pr = tape.gather_rows(p[self.ids.prompt], slots);
            tape.add(tok, pr)
        } else {
            tok
        };
        if self.config.alpha == 0.0 {
            return x;
        }
        let w = tape.input(xw.scaled(self.config.alpha));
        tape.add(x, w)
    }

    #[allow(clippy::too_many_arguments)]
    fn attend(
        &self,
        tape: &mut Tape,
        p: &[Var],
        ids: &AttnIds,
        query_in: Var,
        k: Var,
        v: Var,
        bias: Option<(usize, bool)>,
    ) -> Var {
        let heads = self.config.heads;
        let dh = self.config.head_dim();
        let q = tape.matmul(query_in, p[ids.wq]);
        let q_len = tape.value(q).rows();
        let k_len = tape.value(k).rows();
        let bias_idx = bias.map(|(_, bidir)| bucket_index(q_len, k_len, bidir));
        let mask = bias.filter(|(_, bidir)| !bidir).map(|_| causal_mask(q_len));
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = tape.slice_cols(q, h * dh, dh);
            let kh = tape.slice_cols(k, h * dh, dh);
            let vh = tape.slice_cols(v, h * dh, dh);
            let s = tape.matmul_bt(qh, kh);
            let mut s = tape.scale(s, 1.0 / (dh as f64).sqrt());
            if let (Some((table, _)), Some(idx)) = (bias, &bias_idx) {
                let b = tape.lookup(p[table], h, q_len, k_len, idx.clone());
                s = tape.add(s, b);
            }
            if let Some(m) = &mask {
                let m = tape.input(m.clone());
                s = tape.add(s, m);
            }
            let a = tape.softmax(s);
            outs.push(tape.matmul(a, vh));
        }
        let o = if heads == 1 {
            outs[0]
        } else {
            tape.concat_cols(outs)
        };
        tape.matmul(o, p[ids.wo])
    }

    fn ffn(&self, tape: &mut Tape, p: &[Var], ids: &FfnIds, x: Var) -> Var {
        let h = tape.matmul(x, p[ids.w1]);
        let h = tape.relu(h);
        tape.matmul(h, p[ids.w2])
    }

    fn encode(&self, tape: &mut Tape, p: &[Var], prompt: &TokenizedPrompt, xw: &Matrix) -> Memory {
        let mut x = self.input_embedding(tape, p, prompt, xw);
        for layer in &self.ids.enc {
            let a = tape.rms_norm(x, p[layer.norm_attn]);
            let k = tape.matmul(a, p[layer.attn.wk]);
            let v = tape.matmul(a, p[layer.attn.wv]);
            let o = self.attend(
                tape,
                p,
                &layer.attn,
                a,
                k,
                v,
                Some((self.ids.enc_bias, true)),
            );
            x = tape.add(x, o);
            let f = tape.rms_norm(x, p[layer.norm_ffn]);
            let o = self.ffn(tape, p, &layer.ffn, f);
            x = tape.add(x, o);
        }
        let out = tape.rms_norm(x, p[self.ids.enc_norm]);
        let kv = self
            .ids
            .dec
            .iter()
            .map(|layer| {
                let k = tape.matmul(out, p[layer.cross.wk]);
                let v = tape.matmul(out, p[layer.cross.wv]);
                (k, v)
            })
            .collect();
        Memory { kv }
    }

    /// Logits (`|input| × |V|`) for every decoder position.
    fn decode(&self, tape: &mut Tape, p: &[Var], memory: &Memory, input: &[u32]) -> Var {
        let idx = input.iter().map(|&t| Some(t as usize)).collect();
        let mut y = tape.gather_rows(p[self.ids.tok], idx);
        for (layer, &(mk, mv)) in self.ids.dec.iter().zip(&memory.kv) {
            let a = tape.rms_norm(y, p[layer.norm_self]);
            let k = tape.matmul(a, p[layer.self_attn.wk]);
            let v = tape.matmul(a, p[layer.self_attn.wv]);
            let o = self.attend(
                tape,
                p,
                &layer.self_attn,
                a,
                k,
                v,
                Some((self.ids.dec_bias, false)),
            );
            y = tape.add(y, o);
            let c = tape.rms_norm(y, p[layer.norm_cross]);
            let o = self.attend(tape, p, &layer.cross, c, mk, mv, None);
            y = tape.add(y, o);
            let f = tape.rms_norm(y, p[layer.norm_ffn]);
            let o = self.ffn(tape, p, &layer.ffn, f);
            y = tape.add(y, o);
        }
        let h = tape.rms_norm(y, p[self.ids.dec_norm]);
        let logits = tape.matmul_bt(h, p[self.ids.tok]);
        tape.scale(logits, 1.0 / (self.config.d_n as f64).sqrt())
    }

    fn check_target(&self, target: &[u32]) -> Result<()> {
        if target.is_empty() {
            return Err(Error::invalid("empty target sequence"));
        }
        if target.iter().any(|&t| t as usize >= self.vocab.len()) {
            return Err(Error::invalid("target token outside the vocabulary"));
        }
        Ok(())
    }

    /// `X̂ = X_p + α·X_ω` for one prompt.
    pub fn embed_input(
        &self,
        prompt: &TokenizedPrompt,
        scheme: &WholeWordScheme,
    ) -> Result<Matrix> {
        let xw = self.wholeword(prompt, scheme)?;
        let mut tape = Tape::new();
        let p = self.bind(&mut tape);
        let x = self.input_embedding(&mut tape, &p, prompt, &xw);
        Ok(tape.value(x).clone())
    }

    fn wholeword(&self, prompt: &TokenizedPrompt, scheme: &WholeWordScheme) -> Result<Matrix> {
        if scheme.dim() != self.config.d_n {
            return Err(Error::shape(format!(
                "whole-word dim {} != model width {}",
                scheme.dim(),
                self.config.d_n
            )));
        }
        lookup_wholeword(scheme, prompt)
    }

    fn example_tape(
        &self,
        prompt: &TokenizedPrompt,
        target: &[u32],
        scheme: &WholeWordScheme,
    ) -> Result<(Tape, Var)> {
        self.check_target(target)?;
        let xw = self.wholeword(prompt, scheme)?;
        let mut tape = Tape::new();
        let p = self.bind(&mut tape);
        let memory = self.encode(&mut tape, &p, prompt, &xw);
        let mut input = vec![Vocab::PAD];
        input.extend_from_slice(&target[..target.len() - 1]);
        let logits = self.decode(&mut tape, &p, &memory, &input);
        let loss = tape.cross_entropy(logits, target.to_vec());
        let v = tape.value(loss)[(0, 0)];
        if !v.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {v}")));
        }
        Ok((tape, loss))
    }

    /// Teacher-forced mean token negative log-likelihood of one pair.
    pub fn example_loss(
        &self,
        prompt: &TokenizedPrompt,
        target: &[u32],
        scheme: &WholeWordScheme,
    ) -> Result<f64> {
        let (tape, loss) = self.example_tape(prompt, target, scheme)?;
        Ok(tape.value(loss)[(0, 0)])
    }

    /// Loss of one pair, with its gradient added into `grads`.
    pub fn example_grads(
        &self,
        prompt: &TokenizedPrompt,
        target: &[u32],
        scheme: &WholeWordScheme,
        grads: &mut [Matrix],
    ) -> Result<f64> {
        let (tape, loss) = self.example_tape(prompt, target, scheme)?;
        tape.backward(loss, grads);
        Ok(tape.value(loss)[(0, 0)])
    }

    /// Mean loss over examples and its gradient. Examples are processed in
    /// fixed-size chunks so results do not depend on the thread count.
    pub fn batch_grads(
        &self,
        examples: &[&Example],
        scheme: &WholeWordScheme,
    ) -> Result<(f64, Vec<Matrix>)> {
        if examples.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let partial: Vec<Result<(f64, Vec<Matrix>)>> = examples
            .par_chunks(8)
            .map(|chunk| {
                let mut g = self.params.zeros_like();
                let mut loss = 0.0;
                for ex in chunk {
                    loss += self.example_grads(&ex.prompt, &ex.target, scheme, &mut g)?;
                }
                Ok((loss, g))
            })
            .collect();
        let mut total = 0.0;
        let mut grads = self.params.zeros_like();
        for part in partial {
            let (l, g) = part?;
            total += l;
            for (acc, gi) in grads.iter_mut().zip(&g) {
                acc.add_assign(gi);
            }
        }
        let n = examples.len() as f64;
        grads.iter_mut().for_each(|g| g.scale(1.0 / n));
        Ok((total / n, grads))
    }

    /// Mean over examples of the mean token negative log-likelihood.
    pub fn forward_loss(&self, examples: &[Example], scheme: &WholeWordScheme) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let losses: Vec<Result<f64>> = examples
            .par_iter()
            .map(|ex| self.example_loss(&ex.prompt, &ex.target, scheme))
            .collect();
        let mut total = 0.0;
        for l in losses {
            total += l?;
        }
        Ok(total / examples.len() as f64)
    }

    /// Encode `prompt` once for repeated decoding.
    pub fn session(
        &self,
        prompt: &TokenizedPrompt,
        scheme: &WholeWordScheme,
    ) -> Result<Session<'_>> {
        let xw = self.wholeword(prompt, scheme)?;
        let mut tape = Tape::new();
        let params = self.bind(&mut tape);
        let memory = self.encode(&mut tape, &params, prompt, &xw);
        let base = tape.len();
        Ok(Session {
            model: self,
            tape,
            params,
            memory,
            base,
        })
    }

    /// Length-normalized log-probability of each target under one prompt.
    pub fn score_targets(
        &self,
        prompt: &TokenizedPrompt,
        scheme: &WholeWordScheme,
        targets: &[Vec<u32>],
    ) -> Result<Vec<f64>> {
        for t in targets {
            self.check_target(t)?;
        }
        let mut s = self.session(prompt, scheme)?;
        Ok(targets.iter().map(|t| s.sequence_score(t)).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.params.values.iter().all(Matrix::is_finite)
    }
}
