//! Numerical rank of attention matrices with and without whole-word vectors.
//!
//! ID embeddings assembled from `d_x` digit subwords span at most `d_x`
//! dimensions, so `A_x = (X W_Q)(X W_K)ᵀ` has rank at most `d_x`. Adding an
//! independent per-entity vector `P` lifts `A_{x+p}` to full rank `d_n`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct RankExperiment {
    /// Number of token samples (rows of `X`).
    pub n: usize,
    /// Digit-subword basis size.
    pub d_x: usize,
    /// Number of distinct entities.
    pub d_p: usize,
    /// Embedding width, equal to the head width.
    pub d_n: usize,
    pub trials: usize,
    /// Relative singular-value threshold.
    pub tol: f64,
}

impl RankExperiment {
    pub fn validate(&self) -> Result<()> {
        if !(self.n > self.d_p && self.d_p > self.d_n && self.d_n > self.d_x && self.d_x >= 1) {
            return Err(Error::invalid(format!(
                "need n > d_p > d_n > d_x >= 1, got n={} d_p={} d_n={} d_x={}",
                self.n, self.d_p, self.d_n, self.d_x
            )));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::invalid("tol must be positive"));
        }
        Ok(())
    }
}

impl Default for RankExperiment {
    fn default() -> Self {
        Self {
            n: 64,
            d_x: 6,
            d_p: 32,
            d_n: 16,
            trials: 20,
            tol: 1e-10,
        }
    }
}

/// `n × d_n` ID embeddings: nonnegative combinations of a random `d_x`-row basis.
pub fn sample_id_embeddings(exp: &RankExperiment, seed: u64) -> Matrix {
    let mut r = rng::stream(seed, "rank-x");
    let basis = Matrix::random_normal(exp.d_x, exp.d_n, 1.0, &mut r);
    let coef: Vec<f64> = (0..exp.n * exp.d_x).map(|_| r.random::<f64>()).collect();
    let coef = Matrix::from_vec(exp.n, exp.d_x, coef).expect("n × d_x");
    coef.matmul(&basis)
}

/// `n × d_n` whole-word rows: sample `i` carries entity `i mod d_p`'s `N(0, 1)` vector.
pub fn sample_wholeword(exp: &RankExperiment, seed: u64) -> Matrix {
    let table = Matrix::random_normal(exp.d_p, exp.d_n, 1.0, &mut rng::stream(seed, "rank-p"));
    let mut p = Matrix::zeros(exp.n, exp.d_n);
    for i in 0..exp.n {
        p.row_mut(i).copy_from_slice(table.row(i % exp.d_p));
    }
    p
}

/// Count of singular values above `tol · σ_max · max(rows, cols)`.
pub fn numerical_rank(m: &Matrix, tol: f64) -> usize {
    let dm = DMatrix::from_row_slice(m.rows(), m.cols(), m.data());
    let sv = dm.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    let cut = tol * max * m.rows().max(m.cols()) as f64;
    sv.iter().filter(|&&s| s > cut).count()
}

/// `(rank A_x, rank A_{x+p})`.
pub fn measure_ranks(
    x: &Matrix,
    p: &Matrix,
    wq: &Matrix,
    wk: &Matrix,
    tol: f64,
) -> Result<(usize, usize)> {
    if x.shape() != p.shape() || wq.shape() != wk.shape() || x.cols() != wq.rows() {
        return Err(Error::shape(format!(
            "X {:?}, P {:?}, W_Q {:?}, W_K {:?}",
            x.shape(),
            p.shape(),
            wq.shape(),
            wk.shape()
        )));
    }
    let a_x = x.matmul(wq).matmul_t(&x.matmul(wk));
    let mut xp = x.clone();
    xp.add_assign(p);
    let a_xp = xp.matmul(wq).matmul_t(&xp.matmul(wk));
    // both are n × n with n > d_n, so max(rows, cols) = max(n, d_n)
    Ok((numerical_rank(&a_x, tol), numerical_rank(&a_xp, tol)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankTrial {
    pub trial: usize,
    pub rank_x: usize,
    pub rank_xp: usize,
}

/// Independent trials with fresh `X`, `P`, `W_Q`, `W_K` each time.
pub fn run_rank_trials(exp: &RankExperiment, seed: u64) -> Result<Vec<RankTrial>> {
    exp.validate()?;
    (0..exp.trials)
        .map(|trial| {
            let s = seed.wrapping_mul(1_000_003).wrapping_add(trial as u64);
            let x = sample_id_embeddings(exp, s);
            let p = sample_wholeword(exp, s);
            let mut wr = rng::stream(s, "rank-w");
            let wq = Matrix::random_normal(exp.d_n, exp.d_n, 1.0, &mut wr);
            let wk = Matrix::random_normal(exp.d_n, exp.d_n, 1.0, &mut wr);
            let (rank_x, rank_xp) = measure_ranks(&x, &p, &wq, &wk, exp.tol)?;
            Ok(RankTrial {
                trial,
                rank_x,
                rank_xp,
            })
        })
        .collect()
}

pub fn trials_to_csv(trials: &[RankTrial]) -> String {
    let mut out = String::from("trial,rank_x,rank_xp\n");
    for t in trials {
        let _ = writeln!(out, "{},{},{}", t.trial, t.rank_x, t.rank_xp);
    }
    out
}
