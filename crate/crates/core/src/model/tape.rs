//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Calling
//! [`Tape::backward`] on a scalar node walks the record in reverse and
//! accumulates gradients for every node that came from a parameter.

use crate::tensor::Matrix;

const RMS_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(usize),
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulBT(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    /// Row-wise root-mean-square normalization with a `1 × d` gain.
    RmsNorm(Var, Var),
    /// Row-wise softmax.
    Softmax(Var),
    /// Row `i` of the output is `table[idx[i]]`, or zeros for `None`.
    GatherRows(Var, Vec<Option<usize>>),
    /// Entry `(r, c)` of the output is `table[index[r * cols + c], col]`.
    Lookup {
        table: Var,
        col: usize,
        index: Vec<usize>,
    },
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    /// Mean token negative log-likelihood; output is `1 × 1`.
    CrossEntropy(Var, Vec<u32>),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Row-wise log-softmax.
pub fn log_softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drop every node recorded after the first `len`.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Matrix) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(Op::Input, value)
    }

    pub fn param(&mut self, id: usize, value: Matrix) -> Var {
        self.push(Op::Param(id), value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(Op::MatMul(a, b), v)
    }

    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_t(self.value(b));
        self.push(Op::MatMulBT(a, b), v)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(Op::Add(a, b), v)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scaled(s);
        self.push(Op::Scale(a, s), v)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        v.data_mut().iter_mut().for_each(|x| *x = x.max(0.0));
        self.push(Op::Relu(a), v)
    }

    pub fn rms_norm(&mut self, x: Var, gain: Var) -> Var {
        let xv = self.value(x);
        let g = self.value(gain).row(0);
        let d = xv.cols() as f64;
        let mut out = xv.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            let r = (row.iter().map(|v| v * v).sum::<f64>() / d + RMS_EPS).sqrt();
            for (v, gj) in row.iter_mut().zip(g) {
                *v = *v * gj / r;
            }
        }
        self.push(Op::RmsNorm(x, gain), out)
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let v = softmax_rows(self.value(a));
        self.push(Op::Softmax(a), v)
    }

    pub fn gather_rows(&mut self, table: Var, idx: Vec<Option<usize>>) -> Var {
        let t = self.value(table);
        let mut out = Matrix::zeros(idx.len(), t.cols());
        for (i, r) in idx.iter().enumerate() {
            if let Some(r) = r {
                out.row_mut(i).copy_from_slice(t.row(*r));
            }
        }
        self.push(Op::GatherRows(table, idx), out)
    }

    pub fn lookup(
        &mut self,
        table: Var,
        col: usize,
        rows: usize,
        cols: usize,
        index: Vec<usize>,
    ) -> Var {
        debug_assert_eq!(index.len(), rows * cols);
        let t = self.value(table);
        let data = index.iter().map(|&r| t[(r, col)]).collect();
        let out = Matrix::from_vec(rows, cols, data).expect("index sized rows * cols");
        self.push(Op::Lookup { table, col, index }, out)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let src = self.value(a);
        let mut out = Matrix::zeros(src.rows(), len);
        for i in 0..src.rows() {
            out.row_mut(i)
                .copy_from_slice(&src.row(i)[start..start + len]);
        }
        self.push(Op::SliceCols(a, start), out)
    }

    pub fn concat_cols(&mut self, parts: Vec<Var>) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let mut off = 0;
            for p in &parts {
                let src = self.value(*p).row(i);
                out.row_mut(i)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        self.push(Op::ConcatCols(parts), out)
    }

    pub fn cross_entropy(&mut self, logits: Var, targets: Vec<u32>) -> Var {
        let logp = log_softmax_rows(self.value(logits));
        let nll: f64 = targets
            .iter()
            .enumerate()
            .map(|(i, &t)| -logp[(i, t as usize)])
            .sum::<f64>()
            / targets.len() as f64;
        self.push(
            Op::CrossEntropy(logits, targets),
            Matrix::from_vec(1, 1, vec![nll]).expect("1x1"),
        )
    }

    /// Gradients of the scalar `output` with respect to every parameter
    /// node, accumulated into `grads[param_id]`.
    pub fn backward(&self, output: Var, grads: &mut [Matrix]) {
        let mut adj: Vec<Option<Matrix>> = (0..=output.0).map(|_| None).collect();
        adj[output.0] = Some(Matrix::from_vec(1, 1, vec![1.0]).expect("1x1"));

        fn acc(adj: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut adj[v.0] {
                Some(m) => m.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=output.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => grads[*id].add_assign(&g),
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b));
                    let gb = self.value(*a).t_matmul(&g);
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::MatMulBT(a, b) => {
                    let ga = g.matmul(self.value(*b));
                    let gb = g.t_matmul(self.value(*a));
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *b, g.clone());
                    acc(&mut adj, *a, g);
                }
                Op::Scale(a, s) => acc(&mut adj, *a, g.scaled(*s)),
                Op::Relu(a) => {
                    let mut ga = g;
                    for (gv, &y) in ga.data_mut().iter_mut().zip(node.value.data()) {
                        if y <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    acc(&mut adj, *a, ga);
                }
                Op::RmsNorm(x, gain) => {
                    let xv = self.value(*x);
                    let gv = self.value(*gain).row(0);
                    let d = xv.cols();
                    let mut gx = Matrix::zeros(xv.rows(), d);
                    let mut gg = Matrix::zeros(1, d);
                    for i in 0..xv.rows() {
                        let xr = xv.row(i);
                        let dy = g.row(i);
                        let r = (xr.iter().map(|v| v * v).sum::<f64>() / d as f64 + RMS_EPS).sqrt();
                        let mut s = 0.0;
                        for j in 0..d {
                            gg.data_mut()[j] += dy[j] * xr[j] / r;
                            s += dy[j] * gv[j] * xr[j];
                        }
                        let k = s / (d as f64 * r * r * r);
                        let out = gx.row_mut(i);
                        for j in 0..d {
                            out[j] = gv[j] * dy[j] / r - xr[j] * k;
                        }
                    }
                    acc(&mut adj, *x, gx);
                    acc(&mut adj, *gain, gg);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut ga = Matrix::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let (yr, dy) = (y.row(i), g.row(i));
                        let s: f64 = yr.iter().zip(dy).map(|(a, b)| a * b).sum();
                        for (o, (yv, dv)) in ga.row_mut(i).iter_mut().zip(yr.iter().zip(dy)) {
                            *o = yv * (dv - s);
                        }
                    }
                    acc(&mut adj, *a, ga);
                }
                Op::GatherRows(table, idx) => {
                    let t = self.value(*table);
                    let mut gt = Matrix::zeros(t.rows(), t.cols());
                    for (i, r) in idx.iter().enumerate() {
                        if let Some(r) = r {
                            for (o, v) in gt.row_mut(*r).iter_mut().zip(g.row(i)) {
                                *o += v;
                            }
                        }
                    }
                    acc(&mut adj, *table, gt);
                }
                Op::Lookup { table, col, index } => {
                    let t = self.value(*table);
                    let mut gt = Matrix::zeros(t.rows(), t.cols());
                    let cols = t.cols();
                    for (&r, &gv) in index.iter().zip(g.data()) {
                        gt.data_mut()[r * cols + col] += gv;
                    }
                    acc(&mut adj, *table, gt);
                }
                Op::SliceCols(a, start) => {
                    let src = self.value(*a);
                    let mut ga = Matrix::zeros(src.rows(), src.cols());
                    let len = g.cols();
                    for i in 0..src.rows() {
                        ga.row_mut(i)[*start..*start + len].copy_from_slice(g.row(i));
                    }
                    acc(&mut adj, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let c = self.value(*p).cols();
                        let mut gp = Matrix::zeros(g.rows(), c);
                        for i in 0..g.rows() {
                            gp.row_mut(i).copy_from_slice(&g.row(i)[off..off + c]);
                        }
                        off += c;
                        acc(&mut adj, *p, gp);
                    }
                }
                Op::CrossEntropy(logits, targets) => {
                    let scale = g[(0, 0)] / targets.len() as f64;
                    let mut p = softmax_rows(self.value(*logits));
                    for (i, &t) in targets.iter().enumerate() {
                        p.row_mut(i)[t as usize] -= 1.0;
                    }
                    p.scale(scale);
                    acc(&mut adj, *logits, p);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    /// Central differences of `f` over every entry of every parameter.
    fn check(params: &[Matrix], f: impl Fn(&mut Tape, &[Var]) -> Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params
            .iter()
            .enumerate()
            .map(|(i, p)| tape.param(i, p.clone()))
            .collect();
        let out = f(&mut tape, &vars);
        let mut grads: Vec<Matrix> = params
            .iter()
            .map(|p| Matrix::zeros(p.rows(), p.cols()))
            .collect();
        tape.backward(out, &mut grads);
        let eval = |ps: &[Matrix]| {
            let mut t = Tape::new();
            let vs: Vec<Var> = ps
                .iter()
                .enumerate()
                .map(|(i, p)| t.param(i, p.clone()))
                .collect();
            let o = f(&mut t, &vs);
            t.value(o)[(0, 0)]
        };
        let h = 1e-5;
        for (pi, p) in params.iter().enumerate() {
            for k in 0..p.data().len() {
                let mut plus = params.to_vec();
                plus[pi].data_mut()[k] += h;
                let mut minus = params.to_vec();
                minus[pi].data_mut()[k] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let an = grads[pi].data()[k];
                assert!(
                    (fd - an).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "param {pi}[{k}]: fd {fd} vs {an}"
                );
            }
        }
    }

    fn rand(r: usize, c: usize, seed: u64) -> Matrix {
        Matrix::random_normal(r, c, 1.0, &mut rng::substream(seed, "tape-test", 0))
    }

    #[test]
    fn attention_block_gradients() {
        let params = vec![
            rand(4, 6, 1),
            rand(6, 6, 2),
            rand(6, 6, 3),
            rand(1, 6, 4),
            rand(5, 2, 5),
        ];
        check(&params, |t, v| {
            let n = t.rms_norm(v[0], v[3]);
            let q = t.matmul(n, v[1]);
            let k = t.matmul(n, v[2]);
            let q0 = t.slice_cols(q, 0, 3);
            let k0 = t.slice_cols(k, 0, 3);
            let s = t.matmul_bt(q0, k0);
            let s = t.scale(s, 0.5);
            let b = t.lookup(v[4], 1, 4, 4, (0..16).map(|i| i % 5).collect());
            let s = t.add(s, b);
            let p = t.softmax(s);
            let q1 = t.slice_cols(q, 3, 3);
            let o = t.matmul(p, q1);
            let o = t.concat_cols(vec![o, q0]);
            let o = t.relu(o);
            let logits = t.matmul_bt(o, v[1]);
            t.cross_entropy(logits, vec![0, 5, 2, 3])
        });
    }

    #[test]
    fn gather_gradients_skip_none_rows() {
        let params = vec![rand(5, 3, 7)];
        check(&params, |t, v| {
            let g = t.gather_rows(v[0], vec![Some(1), None, Some(1), Some(4)]);
            t.cross_entropy(g, vec![0, 1, 2, 2])
        });
    }

    #[test]
    fn cross_entropy_matches_hand_sum() {
        let logits = rand(3, 4, 9);
        let mut t = Tape::new();
        let l = t.input(logits.clone());
        let out = t.cross_entropy(l, vec![2, 0, 3]);
        let mut hand = 0.0;
        for (i, &y) in [2usize, 0, 3].iter().enumerate() {
            let z: f64 = logits.row(i).iter().map(|v| v.exp()).sum();
            hand -= (logits[(i, y)].exp() / z).ln();
        }
        assert!((t.value(out)[(0, 0)] - hand / 3.0).abs() < 1e-12);
    }

    #[test]
    fn inputs_receive_no_parameter_gradient() {
        let mut t = Tape::new();
        let x = t.input(rand(2, 3, 1));
        let w = t.param(0, rand(3, 3, 2));
        let y = t.matmul(x, w);
        let out = t.cross_entropy(y, vec![0, 1]);
        let mut grads = vec![Matrix::zeros(3, 3)];
        t.backward(out, &mut grads);
        assert!(grads[0].data().iter().any(|v| *v != 0.0));
    }
}
