use crate::error::{Error, Result};
use crate::tensor::{dot, Matrix};

/// The four parts of a whole-word-augmented attention score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionTerms {
    /// `x_i W_Q W_Kᵀ x_jᵀ`
    pub token: f64,
    /// `x_i W_Q W_Kᵀ ω_jᵀ`
    pub token_word: f64,
    /// `ω_i W_Q W_Kᵀ x_jᵀ`
    pub word_token: f64,
    /// `ω_i W_Q W_Kᵀ ω_jᵀ`
    pub word: f64,
}

impl AttentionTerms {
    pub fn sum(&self) -> f64 {
        self.token + self.token_word + self.word_token + self.word
    }
}

fn project(v: &[f64], w: &Matrix) -> Result<Vec<f64>> {
    if v.len() != w.rows() {
        return Err(Error::shape(format!(
            "vector of length {} against {}x{} projection",
            v.len(),
            w.rows(),
            w.cols()
        )));
    }
    let mut out = vec![0.0; w.cols()];
    for (vi, row) in v.iter().zip(w.iter_rows()) {
        for (o, wv) in out.iter_mut().zip(row) {
            *o += vi * wv;
        }
    }
    Ok(out)
}

fn check(
    x_i: &[f64],
    w_i: &[f64],
    x_j: &[f64],
    w_j: &[f64],
    wq: &Matrix,
    wk: &Matrix,
) -> Result<()> {
    let d = x_i.len();
    if [w_i.len(), x_j.len(), w_j.len()].iter().any(|&n| n != d) {
        return Err(Error::shape(
            "token and whole-word vectors differ in length",
        ));
    }
    if wq.shape() != wk.shape() {
        return Err(Error::shape("W_Q and W_K differ in shape"));
    }
    Ok(())
}

/// Pre-softmax score `((x_i+ω_i)W_Q)((x_j+ω_j)W_K)ᵀ`.
pub fn attention_scores(
    x_i: &[f64],
    w_i: &[f64],
    x_j: &[f64],
    w_j: &[f64],
    wq: &Matrix,
    wk: &Matrix,
) -> Result<f64> {
    check(x_i, w_i, x_j, w_j, wq, wk)?;
    let a: Vec<f64> = x_i.iter().zip(w_i).map(|(x, w)| x + w).collect();
    let b: Vec<f64> = x_j.iter().zip(w_j).map(|(x, w)| x + w).collect();
    Ok(dot(&project(&a, wq)?, &project(&b, wk)?))
}

pub fn decompose_attention(
    x_i: &[f64],
    w_i: &[f64],
    x_j: &[f64],
    w_j: &[f64],
    wq: &Matrix,
    wk: &Matrix,
) -> Result<AttentionTerms> {
    check(x_i, w_i, x_j, w_j, wq, wk)?;
    let (qx, qw) = (project(x_i, wq)?, project(w_i, wq)?);
    let (kx, kw) = (project(x_j, wk)?, project(w_j, wk)?);
    Ok(AttentionTerms {
        token: dot(&qx, &kx),
        token_word: dot(&qx, &kw),
        word_token: dot(&qw, &kx),
        word: dot(&qw, &kw),
    })
}
