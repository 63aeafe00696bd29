//! Wengert-list reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value and whatever it
//! needs for the backward sweep. Nodes are created in topological order, so
//! `backward` simply walks the list in reverse.

use super::tensor::{gelu, gelu_grad, log_sum_exp, matrix_dims, normalize_row, softmax_in_place};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sum(Var),
    Reshape(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Gelu(Var),
    Attention {
        qkv: Var,
        batch: usize,
        seq: usize,
        heads: usize,
        probs: Vec<T>,
    },
    GatherRows {
        x: Var,
        index: Vec<usize>,
    },
    ConcatRows(Var, Var),
    RowDot(Var, Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    requires_grad: bool,
    op: Op<T>,
}

/// Recorded computation graph.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Multi-head attention probabilities retained by an attention node,
/// laid out `[batch][head][query][key]`.
pub struct AttentionProbs<'a, T> {
    pub probs: &'a [T],
    pub batch: usize,
    pub heads: usize,
    pub seq: usize,
}

impl<T: Scalar> AttentionProbs<'_, T> {
    /// `[heads × seq × seq]` slice for one batch element.
    pub fn sample(&self, b: usize) -> Tensor<T> {
        let n = self.heads * self.seq * self.seq;
        Tensor::new(
            [self.heads, self.seq, self.seq],
            self.probs[b * n..(b + 1) * n].to_vec(),
        )
        .expect("attention slice has consistent shape")
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub fn attention_probs(&self, v: Var) -> Option<AttentionProbs<'_, T>> {
        match &self.nodes[v.0].op {
            Op::Attention {
                batch,
                seq,
                heads,
                probs,
                ..
            } => Some(AttentionProbs {
                probs,
                batch: *batch,
                heads: *heads,
                seq: *seq,
            }),
            _ => None,
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = super::tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    /// `x[R×in] @ w[in×out] + b[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xv = self.value(x);
        let wv = self.value(w);
        let (din, dout) = matrix_dims(wv, "linear")?;
        if xv.cols() != din {
            return Err(Error::dims("linear", xv.shape(), wv.shape()));
        }
        let rows = xv.rows();
        let mut out = Tensor::zeros([rows, dout]);
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.numel() != dout {
                return Err(Error::dims("linear bias", wv.shape(), bv.shape()));
            }
            for r in 0..rows {
                out.data_mut()[r * dout..(r + 1) * dout].copy_from_slice(bv.data());
            }
        }
        T::gemm(
            rows,
            din,
            dout,
            T::one(),
            xv.data(),
            din as isize,
            1,
            wv.data(),
            dout as isize,
            1,
            if b.is_some() { T::one() } else { T::zero() },
            out.data_mut(),
            dout as isize,
            1,
        );
        let inputs: Vec<Var> = [Some(x), Some(w), b].into_iter().flatten().collect();
        Ok(self.push(out, Op::Linear { x, w, b }, &inputs))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dims(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b))?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let mut out = self.value(a).clone();
        for (o, &y) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o *= y;
        }
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let out = self.value(x).map(|v| v * s);
        self.push(out, Op::Scale(x, s), &[x])
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let mut total = T::zero();
        for &v in self.value(x).data() {
            total += v;
        }
        self.push(Tensor::scalar(total), Op::Sum(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape.to_vec())?;
        Ok(self.push(out, Op::Reshape(x), &[x]))
    }

    /// Softmax over the last axis.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if !xv.all_finite() {
            return Err(Error::Numeric("softmax input contains non-finite values".into()));
        }
        let c = xv.cols();
        let mut out = xv.clone();
        for row in out.data_mut().chunks_mut(c.max(1)) {
            softmax_in_place(row);
        }
        Ok(self.push(out, Op::SoftmaxRows(x), &[x]))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let xv = self.value(x);
        let c = xv.cols();
        if self.value(gain).numel() != c || self.value(bias).numel() != c {
            return Err(Error::dims("layer_norm", xv.shape(), self.shape(gain)));
        }
        if eps <= 0.0 {
            return Err(Error::Contract(format!("layer_norm eps must be > 0, got {eps}")));
        }
        let rows = xv.rows();
        let mut xhat = xv.data().to_vec();
        let mut inv_std = Vec::with_capacity(rows);
        for row in xhat.chunks_mut(c) {
            inv_std.push(normalize_row(row, T::of(eps)).1);
        }
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut out = Tensor::new(xv.shape().to_vec(), xhat.clone())?;
        for row in out.data_mut().chunks_mut(c) {
            for ((v, &gv), &bv) in row.iter_mut().zip(g).zip(b) {
                *v = *v * gv + bv;
            }
        }
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            &[x, gain, bias],
        ))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(gelu);
        self.push(out, Op::Gelu(x), &[x])
    }

    /// Multi-head scaled dot-product self-attention.
    ///
    /// `qkv` is `[batch·seq × 3C]` with query, key and value blocks side by
    /// side; the output is `[batch·seq × C]` with heads concatenated. The
    /// softmax probabilities stay on the node for later inspection.
    pub fn attention(&mut self, qkv: Var, batch: usize, seq: usize, heads: usize) -> Result<Var> {
        self.attention_masked(qkv, batch, seq, heads, seq)
    }

    /// As [`Tape::attention`], but keys at positions `>= visible` get zero
    /// probability.
    pub fn attention_masked(
        &mut self,
        qkv: Var,
        batch: usize,
        seq: usize,
        heads: usize,
        visible: usize,
    ) -> Result<Var> {
        if visible == 0 || visible > seq {
            return Err(Error::Contract(format!("attention: {visible} visible keys out of {seq}")));
        }
        let qv = self.value(qkv);
        let (rows, three_c) = matrix_dims(qv, "attention")?;
        if rows != batch * seq || three_c % 3 != 0 || heads == 0 || (three_c / 3) % heads != 0 {
            return Err(Error::Contract(format!(
                "attention: qkv shape {:?} incompatible with batch={batch}, seq={seq}, heads={heads}",
                qv.shape()
            )));
        }
        let c = three_c / 3;
        let d = c / heads;
        let scale = T::one() / T::of(d as f64).sqrt();
        let mut probs = vec![T::zero(); batch * heads * seq * seq];
        let mut out = Tensor::zeros([rows, c]);
        let q = qv.data();
        for b in 0..batch {
            for h in 0..heads {
                let base = b * seq * three_c + h * d;
                let p = &mut probs[(b * heads + h) * seq * seq..(b * heads + h + 1) * seq * seq];
                // scores = Q Kᵀ / √d
                T::gemm(
                    seq,
                    d,
                    seq,
                    scale,
                    &q[base..],
                    three_c as isize,
                    1,
                    &q[base + c..],
                    1,
                    three_c as isize,
                    T::zero(),
                    p,
                    seq as isize,
                    1,
                );
                for row in p.chunks_mut(seq) {
                    softmax_in_place(&mut row[..visible]);
                    row[visible..].fill(T::zero());
                }
                T::gemm(
                    seq,
                    seq,
                    d,
                    T::one(),
                    p,
                    seq as isize,
                    1,
                    &q[base + 2 * c..],
                    three_c as isize,
                    1,
                    T::zero(),
                    &mut out.data_mut()[b * seq * c + h * d..],
                    c as isize,
                    1,
                );
            }
        }
        Ok(self.push(
            out,
            Op::Attention {
                qkv,
                batch,
                seq,
                heads,
                probs,
            },
            &[qkv],
        ))
    }

    /// Row `i` of the output is row `index[i]` of `x` (`x` viewed as `[rows × cols]`).
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let c = xv.cols();
        let rows = xv.rows();
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in index {
            if i >= rows {
                return Err(Error::Index { index: i, len: rows });
            }
            data.extend_from_slice(xv.row(i));
        }
        let out = Tensor::new([index.len(), c], data)?;
        Ok(self.push(
            out,
            Op::GatherRows {
                x,
                index: index.to_vec(),
            },
            &[x],
        ))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return Err(Error::dims("concat_rows", av.shape(), bv.shape()));
        }
        let mut data = av.data().to_vec();
        data.extend_from_slice(bv.data());
        let out = Tensor::new([av.rows() + bv.rows(), av.cols()], data)?;
        Ok(self.push(out, Op::ConcatRows(a, b), &[a, b]))
    }

    /// Dot product of corresponding rows: `[R×C] · [R×C] -> [R]`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("row_dot", a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let c = av.cols();
        let out: Vec<T> = av
            .data()
            .chunks(c)
            .zip(bv.data().chunks(c))
            .map(|(x, y)| {
                let mut s = T::zero();
                for (&p, &q) in x.iter().zip(y) {
                    s += p * q;
                }
                s
            })
            .collect();
        let n = out.len();
        Ok(self.push(Tensor::new([n], out)?, Op::RowDot(a, b), &[a, b]))
    }

    /// Mean softmax cross-entropy over the rows of `logits` (`[n]` is one row).
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let n = lv.cols();
        let rows = lv.rows();
        if targets.len() != rows {
            return Err(Error::Contract(format!(
                "cross_entropy: {} targets for {rows} rows",
                targets.len()
            )));
        }
        if !lv.all_finite() {
            return Err(Error::Numeric("cross_entropy logits contain non-finite values".into()));
        }
        let mut probs = lv.data().to_vec();
        let mut total = T::zero();
        for (r, &t) in targets.iter().enumerate() {
            if t >= n {
                return Err(Error::Index { index: t, len: n });
            }
            let row = &lv.data()[r * n..(r + 1) * n];
            total += log_sum_exp(row) - row[t];
            softmax_in_place(&mut probs[r * n..(r + 1) * n]);
        }
        let value = Tensor::scalar(total / T::of(rows.max(1) as f64));
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    /// Populates `grad` on every node that requires one and from which `loss`
    /// is reachable. Gradients accumulate across calls until [`zero_grad`].
    ///
    /// [`zero_grad`]: Tape::zero_grad
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let mut adj: Vec<Option<Vec<T>>> = Vec::with_capacity(loss.0 + 1);
        adj.resize_with(loss.0 + 1, || None);
        adj[loss.0] = Some(vec![T::one()]);
        let mut finished: Vec<(usize, Vec<T>)> = Vec::new();

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(i, &g, &mut adj)?;
                finished.push((i, g));
            }
        }
        for (i, g) in finished {
            let node = &mut self.nodes[i];
            let shape = node.value.shape().to_vec();
            match &mut node.grad {
                Some(existing) => {
                    for (e, v) in existing.data_mut().iter_mut().zip(g) {
                        *e += v;
                    }
                }
                None => node.grad = Some(Tensor::new(shape, g)?),
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[T], adj: &mut [Option<Vec<T>>]) -> Result<()> {
        let nodes = &self.nodes;
        let wants = |v: Var| nodes[v.0].requires_grad;
        let val = |v: Var| &nodes[v.0].value;
        fn slot<T: Scalar>(adj: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut [T] {
            adj[v.0].get_or_insert_with(|| vec![T::zero(); len])
        }

        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = matrix_dims(val(*a), "matmul")?;
                let n = val(*b).shape()[1];
                if wants(*a) {
                    // dA += dC Bᵀ
                    let da = slot(adj, *a, m * k);
                    T::gemm(m, n, k, T::one(), g, n as isize, 1, val(*b).data(), 1, n as isize, T::one(), da, k as isize, 1);
                }
                if wants(*b) {
                    // dB += Aᵀ dC
                    let db = slot(adj, *b, k * n);
                    T::gemm(k, m, n, T::one(), val(*a).data(), 1, k as isize, g, n as isize, 1, T::one(), db, n as isize, 1);
                }
            }
            Op::Linear { x, w, b } => {
                let (din, dout) = matrix_dims(val(*w), "linear")?;
                let rows = val(*x).rows();
                if wants(*x) {
                    let dx = slot(adj, *x, rows * din);
                    T::gemm(rows, dout, din, T::one(), g, dout as isize, 1, val(*w).data(), 1, dout as isize, T::one(), dx, din as isize, 1);
                }
                if wants(*w) {
                    let dw = slot(adj, *w, din * dout);
                    T::gemm(din, rows, dout, T::one(), val(*x).data(), 1, din as isize, g, dout as isize, 1, T::one(), dw, dout as isize, 1);
                }
                if let Some(b) = b {
                    if wants(*b) {
                        let db = slot(adj, *b, dout);
                        for row in g.chunks(dout) {
                            for (d, &v) in db.iter_mut().zip(row) {
                                *d += v;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if wants(v) {
                        for (d, &x) in slot(adj, v, g.len()).iter_mut().zip(g) {
                            *d += x;
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    let bv = val(*b).data();
                    for ((d, &x), &y) in slot(adj, *a, g.len()).iter_mut().zip(g).zip(bv) {
                        *d += x * y;
                    }
                }
                if wants(*b) {
                    let av = val(*a).data();
                    for ((d, &x), &y) in slot(adj, *b, g.len()).iter_mut().zip(g).zip(av) {
                        *d += x * y;
                    }
                }
            }
            Op::Scale(x, s) => {
                if wants(*x) {
                    for (d, &v) in slot(adj, *x, g.len()).iter_mut().zip(g) {
                        *d += v * *s;
                    }
                }
            }
            Op::Sum(x) => {
                if wants(*x) {
                    let n = val(*x).numel();
                    for d in slot(adj, *x, n).iter_mut() {
                        *d += g[0];
                    }
                }
            }
            Op::Reshape(x) => {
                if wants(*x) {
                    for (d, &v) in slot(adj, *x, g.len()).iter_mut().zip(g) {
                        *d += v;
                    }
                }
            }
            Op::SoftmaxRows(x) => {
                if wants(*x) {
                    let y = nodes[i].value.data();
                    let c = nodes[i].value.cols().max(1);
                    let dx = slot(adj, *x, g.len());
                    for ((dxr, yr), gr) in dx.chunks_mut(c).zip(y.chunks(c)).zip(g.chunks(c)) {
                        let mut dot = T::zero();
                        for (&a, &b) in yr.iter().zip(gr) {
                            dot += a * b;
                        }
                        for ((d, &a), &b) in dxr.iter_mut().zip(yr).zip(gr) {
                            *d += a * (b - dot);
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let c = val(*x).cols();
                let gv = val(*gain).data();
                if wants(*gain) {
                    let dg = slot(adj, *gain, c);
                    for (gr, hr) in g.chunks(c).zip(xhat.chunks(c)) {
                        for ((d, &a), &b) in dg.iter_mut().zip(gr).zip(hr) {
                            *d += a * b;
                        }
                    }
                }
                if wants(*bias) {
                    let db = slot(adj, *bias, c);
                    for gr in g.chunks(c) {
                        for (d, &a) in db.iter_mut().zip(gr) {
                            *d += a;
                        }
                    }
                }
                if wants(*x) {
                    let n = T::of(c as f64);
                    let dx = slot(adj, *x, g.len());
                    let mut dxhat = vec![T::zero(); c];
                    for (r, (gr, hr)) in g.chunks(c).zip(xhat.chunks(c)).enumerate() {
                        let mut mean_d = T::zero();
                        let mut mean_dh = T::zero();
                        for j in 0..c {
                            dxhat[j] = gr[j] * gv[j];
                            mean_d += dxhat[j];
                            mean_dh += dxhat[j] * hr[j];
                        }
                        mean_d /= n;
                        mean_dh /= n;
                        let s = inv_std[r];
                        for j in 0..c {
                            dx[r * c + j] += s * (dxhat[j] - mean_d - hr[j] * mean_dh);
                        }
                    }
                }
            }
            Op::Gelu(x) => {
                if wants(*x) {
                    let xv = val(*x).data();
                    for ((d, &a), &b) in slot(adj, *x, g.len()).iter_mut().zip(g).zip(xv) {
                        *d += a * gelu_grad(b);
                    }
                }
            }
            Op::Attention {
                qkv,
                batch,
                seq,
                heads,
                probs,
            } => {
                if wants(*qkv) {
                    let (batch, seq, heads) = (*batch, *seq, *heads);
                    let q = val(*qkv).data();
                    let three_c = val(*qkv).cols();
                    let c = three_c / 3;
                    let d = c / heads;
                    let scale = T::one() / T::of(d as f64).sqrt();
                    let dqkv = slot(adj, *qkv, q.len());
                    let mut dp = vec![T::zero(); seq * seq];
                    for b in 0..batch {
                        for h in 0..heads {
                            let base = b * seq * three_c + h * d;
                            let gbase = b * seq * c + h * d;
                            let p = &probs[(b * heads + h) * seq * seq..(b * heads + h + 1) * seq * seq];
                            // dV += Pᵀ dO
                            T::gemm(seq, seq, d, T::one(), p, 1, seq as isize, &g[gbase..], c as isize, 1, T::one(), &mut dqkv[base + 2 * c..], three_c as isize, 1);
                            // dP = dO Vᵀ
                            T::gemm(seq, d, seq, T::one(), &g[gbase..], c as isize, 1, &q[base + 2 * c..], 1, three_c as isize, T::zero(), &mut dp, seq as isize, 1);
                            // dS = P ⊙ (dP − rowsum(dP ⊙ P)), folded with the 1/√d factor
                            for (dr, pr) in dp.chunks_mut(seq).zip(p.chunks(seq)) {
                                let mut dot = T::zero();
                                for (&a, &b) in dr.iter().zip(pr) {
                                    dot += a * b;
                                }
                                for (a, &b) in dr.iter_mut().zip(pr) {
                                    *a = b * (*a - dot) * scale;
                                }
                            }
                            // dQ += dS K ; dK += dSᵀ Q
                            T::gemm(seq, seq, d, T::one(), &dp, seq as isize, 1, &q[base + c..], three_c as isize, 1, T::one(), &mut dqkv[base..], three_c as isize, 1);
                            T::gemm(seq, seq, d, T::one(), &dp, 1, seq as isize, &q[base..], three_c as isize, 1, T::one(), &mut dqkv[base + c..], three_c as isize, 1);
                        }
                    }
                }
            }
            Op::GatherRows { x, index } => {
                if wants(*x) {
                    let c = val(*x).cols();
                    let dx = slot(adj, *x, val(*x).numel());
                    for (r, &src) in index.iter().enumerate() {
                        for (d, &v) in dx[src * c..(src + 1) * c].iter_mut().zip(&g[r * c..(r + 1) * c]) {
                            *d += v;
                        }
                    }
                }
            }
            Op::ConcatRows(a, b) => {
                let na = val(*a).numel();
                if wants(*a) {
                    for (d, &v) in slot(adj, *a, na).iter_mut().zip(&g[..na]) {
                        *d += v;
                    }
                }
                if wants(*b) {
                    let nb = val(*b).numel();
                    for (d, &v) in slot(adj, *b, nb).iter_mut().zip(&g[na..]) {
                        *d += v;
                    }
                }
            }
            Op::RowDot(a, b) => {
                let c = val(*a).cols();
                let n = val(*a).numel();
                for (dst, other) in [(*a, *b), (*b, *a)] {
                    if wants(dst) {
                        let ov = val(other).data();
                        let dd = slot(adj, dst, n);
                        for (r, &gr) in g.iter().enumerate() {
                            for (d, &o) in dd[r * c..(r + 1) * c].iter_mut().zip(&ov[r * c..(r + 1) * c]) {
                                *d += gr * o;
                            }
                        }
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                if wants(*logits) {
                    let n = val(*logits).cols();
                    let w = g[0] / T::of(targets.len().max(1) as f64);
                    let dl = slot(adj, *logits, probs.len());
                    for (r, &t) in targets.iter().enumerate() {
                        for j in 0..n {
                            let onehot = if j == t { T::one() } else { T::zero() };
                            dl[r * n + j] += w * (probs[r * n + j] - onehot);
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
