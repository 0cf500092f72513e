//! Reverse-mode tape.
//!
//! Every operation appends a node holding its value; node ids are therefore a
//! topological order and `backward` walks them in reverse. The graph is not
//! consumed by `backward`: values stay available and gradients accumulate
//! across calls until [`Graph::zero_grad`] is called.

use crate::error::{invalid, shape, Error, Result};

use super::kernels::{self, gemm_acc};
use super::{Real, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    /// `[.., k] x [k, n]`, the lhs flattened to `m` rows.
    MatMul {
        a: usize,
        b: usize,
        ta: bool,
        tb: bool,
        m: usize,
        k: usize,
        n: usize,
    },
    BatchMatMul {
        a: usize,
        b: usize,
        ta: bool,
        tb: bool,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    Add(usize, usize),
    /// `b` repeats over the leading axes of `a`.
    AddBroadcast(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    Relu(usize),
    Gelu(usize),
    Softmax(usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    /// `out[j] = table[index[j]]`.
    Gather {
        table: usize,
        index: Vec<usize>,
    },
    GatherRows {
        table: usize,
        ids: Vec<usize>,
    },
    /// Pairwise rotation of the last axis; tables are `[rows, dim / 2]`.
    RotatePairs {
        a: usize,
        cos: Vec<T>,
        sin: Vec<T>,
    },
    Reshape(usize),
    Sum(usize),
    CrossEntropy {
        logits: usize,
        targets: Vec<usize>,
        mask: Vec<bool>,
        probs: Vec<T>,
        count: usize,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Computation graph over tensors of element type `T`.
#[derive(Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<T> {
        &self.nodes[v.0]
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable input.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.node(v).value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Accumulated gradient of `v`, if `backward` reached it.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    /// `a @ b` where `a` is `[.., k]` (or `[k, m]` with `ta`) and `b` is a
    /// matrix `[k, n]` (or `[n, k]` with `tb`).
    pub fn matmul(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sb.len() != 2 {
            return Err(shape(format!("matmul rhs must be a matrix, got {sb:?}")));
        }
        if ta && sa.len() != 2 {
            return Err(shape("transposed matmul lhs must be a matrix"));
        }
        let (m, k) = if ta {
            (sa[1], sa[0])
        } else {
            let k = *sa.last().unwrap();
            (sa.iter().product::<usize>() / k, k)
        };
        let (kb, n) = if tb { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
        if k != kb {
            return Err(shape(format!(
                "matmul inner dims differ: {sa:?}{} x {sb:?}{}",
                if ta { "^T" } else { "" },
                if tb { "^T" } else { "" }
            )));
        }
        let mut out = vec![T::zero(); m * n];
        gemm_acc(
            m,
            k,
            n,
            self.value(a).data(),
            ta,
            self.value(b).data(),
            tb,
            &mut out,
        );
        let mut out_shape = if ta { vec![m] } else { sa[..sa.len() - 1].to_vec() };
        out_shape.push(n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            Tensor::new(out_shape, out)?,
            Op::MatMul {
                a: a.0,
                b: b.0,
                ta,
                tb,
                m,
                k,
                n,
            },
            rg,
        ))
    }

    /// Batched matmul over the leading axis of two rank-3 tensors.
    pub fn bmm(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(shape(format!("bmm needs matching rank-3 operands, got {sa:?} and {sb:?}")));
        }
        let batch = sa[0];
        let (m, k) = if ta { (sa[2], sa[1]) } else { (sa[1], sa[2]) };
        let (kb, n) = if tb { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if k != kb {
            return Err(shape(format!("bmm inner dims differ: {sa:?} x {sb:?}")));
        }
        let mut out = vec![T::zero(); batch * m * n];
        {
            let ad = self.value(a).data();
            let bd = self.value(b).data();
            for i in 0..batch {
                gemm_acc(
                    m,
                    k,
                    n,
                    &ad[i * m * k..(i + 1) * m * k],
                    ta,
                    &bd[i * k * n..(i + 1) * k * n],
                    tb,
                    &mut out[i * m * n..(i + 1) * m * n],
                );
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            Tensor::new(vec![batch, m, n], out)?,
            Op::BatchMatMul {
                a: a.0,
                b: b.0,
                ta,
                tb,
                batch,
                m,
                k,
                n,
            },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape(format!(
                "add of {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x + y);
        let s = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(s, data)?, Op::Add(a.0, b.0), rg))
    }

    /// `a + b` where `b`'s shape equals the trailing axes of `a`'s.
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(shape(format!("cannot broadcast {sb:?} onto {sa:?}")));
        }
        let bd = self.value(b).data();
        let data: Vec<T> = self
            .value(a)
            .data()
            .chunks(bd.len())
            .flat_map(|chunk| chunk.iter().zip(bd).map(|(&x, &y)| x + y))
            .collect();
        let s = sa.to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(s, data)?, Op::AddBroadcast(a.0, b.0), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape(format!(
                "mul of {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x * y);
        let s = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(s, data)?, Op::Mul(a.0, b.0), rg))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let value = self.value(a).map(|x| x * factor);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a.0, factor), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(T::zero()));
        let rg = self.rg(a);
        self.push(value, Op::Relu(a.0), rg)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(kernels::gelu);
        let rg = self.rg(a);
        self.push(value, Op::Gelu(a.0), rg)
    }

    /// Softmax over the last axis. With `causal`, the last two axes are a
    /// square `[query, key]` block and query `t` only sees keys `0..=t`.
    pub fn softmax(&mut self, a: Var, causal: bool) -> Result<Var> {
        let s = self.shape(a).to_vec();
        let n = *s.last().unwrap();
        if causal && (s.len() < 2 || s[s.len() - 2] != n) {
            return Err(shape(format!("causal softmax needs square trailing axes, got {s:?}")));
        }
        let src = self.value(a).data();
        if src.iter().any(|x| x.is_nan()) {
            return Err(Error::NonFinite("NaN in softmax input".into()));
        }
        let mut out = vec![T::zero(); src.len()];
        for (r, (row, o)) in src.chunks(n).zip(out.chunks_mut(n)).enumerate() {
            let active = if causal { r % n + 1 } else { n };
            kernels::softmax_row(row, active, o);
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(s, out)?, Op::Softmax(a.0), rg))
    }

    /// Layer normalisation over the last axis with affine gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let n = *s.last().unwrap();
        if self.shape(gain) != [n] || self.shape(bias) != [n] {
            return Err(shape(format!(
                "layer_norm over {n} features with gain {:?} and bias {:?}",
                self.shape(gain),
                self.shape(bias)
            )));
        }
        let src = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut xhat = vec![T::zero(); src.len()];
        let mut rstd = Vec::with_capacity(src.len() / n);
        let mut out = vec![T::zero(); src.len()];
        for ((row, h), o) in src.chunks(n).zip(xhat.chunks_mut(n)).zip(out.chunks_mut(n)) {
            rstd.push(kernels::normalize_row(row, eps, h));
            for j in 0..n {
                o[j] = h[j] * g[j] + b[j];
            }
        }
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(
            Tensor::new(s, out)?,
            Op::LayerNorm {
                x: x.0,
                gain: gain.0,
                bias: bias.0,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    /// Flat gather from `table` into a tensor of `out_shape`.
    pub fn gather(&mut self, table: Var, index: Vec<usize>, out_shape: &[usize]) -> Result<Var> {
        let src = self.value(table).data();
        if let Some(&bad) = index.iter().find(|&&i| i >= src.len()) {
            return Err(invalid(format!("gather index {bad} out of range {}", src.len())));
        }
        let data = index.iter().map(|&i| src[i]).collect();
        let value = Tensor::new(out_shape.to_vec(), data)?;
        let rg = self.rg(table);
        Ok(self.push(value, Op::Gather { table: table.0, index }, rg))
    }

    /// Row lookup: `table` is `[rows, width]`; output is `[ids.len(), width]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let s = self.shape(table);
        if s.len() != 2 {
            return Err(shape("embedding table must be a matrix"));
        }
        let (rows, width) = (s[0], s[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(invalid(format!("token id {bad} out of range for {rows} rows")));
        }
        let src = self.value(table).data();
        let mut data = Vec::with_capacity(ids.len() * width);
        for &i in ids {
            data.extend_from_slice(&src[i * width..(i + 1) * width]);
        }
        let value = Tensor::new(vec![ids.len(), width], data)?;
        let rg = self.rg(table);
        Ok(self.push(
            value,
            Op::GatherRows {
                table: table.0,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Rotates consecutive pairs `(x[2i], x[2i+1])` of the last axis.
    ///
    /// `a` is viewed as `[.., rows, dim]`; `cos`/`sin` hold `rows * dim / 2`
    /// angles' cosines and sines, repeated over any leading axes.
    pub fn rotate_pairs(&mut self, a: Var, cos: Vec<T>, sin: Vec<T>) -> Result<Var> {
        let s = self.shape(a).to_vec();
        let dim = *s.last().unwrap();
        if dim % 2 != 0 {
            return Err(invalid(format!("rotation needs an even last axis, got {dim}")));
        }
        if cos.len() != sin.len() || cos.is_empty() || (self.value(a).len() / 2) % cos.len() != 0 {
            return Err(shape("rotation tables do not tile the input"));
        }
        let out = rotate(self.value(a).data(), &cos, &sin, false);
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(s, out)?, Op::RotatePairs { a: a.0, cos, sin }, rg))
    }

    pub fn reshape(&mut self, a: Var, new_shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(new_shape)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Reshape(a.0), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().copied().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(total), Op::Sum(a.0), rg)
    }

    /// Mean negative log-likelihood over rows where `mask` is set.
    /// `logits` is viewed as `[rows, vocab]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], mask: &[bool]) -> Result<Var> {
        let vocab = self.value(logits).last_dim();
        let rows = self.value(logits).len() / vocab;
        if targets.len() != rows || mask.len() != rows {
            return Err(shape(format!(
                "cross_entropy over {rows} rows got {} targets and {} mask entries",
                targets.len(),
                mask.len()
            )));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(invalid("cross_entropy mask selects no positions"));
        }
        let src = self.value(logits).data();
        let mut probs = vec![T::zero(); src.len()];
        let mut total = T::zero();
        for (r, row) in src.chunks(vocab).enumerate() {
            if !mask[r] {
                continue;
            }
            let t = targets[r];
            if t >= vocab {
                return Err(invalid(format!("target id {t} >= vocabulary size {vocab}")));
            }
            let lse = kernels::logsumexp(row);
            total += lse - row[t];
            for (p, &x) in probs[r * vocab..(r + 1) * vocab].iter_mut().zip(row) {
                *p = (x - lse).exp();
            }
        }
        let loss = total / T::lit(count as f64);
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits: logits.0,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                probs,
                count,
            },
            rg,
        ))
    }

    /// Propagates d(loss)/d(node) to every node that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(shape(format!(
                "backward needs a scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.rg(loss) {
            return Ok(());
        }
        // Seed into a scratch buffer so repeated calls accumulate.
        let mut work: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        work[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = work[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.backprop_node(i, &g, &mut work);
            match &mut self.grads[i] {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[T], work: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let val = |j: usize| nodes[j].value.data();
        let wants = |j: usize| nodes[j].requires_grad;
        match &nodes[i].op {
            Op::Leaf => {}
            &Op::MatMul {
                a,
                b,
                ta,
                tb,
                m,
                k,
                n,
            } => {
                if wants(a) {
                    let ga = slot(work, a, m * k);
                    if ta {
                        gemm_acc(k, n, m, val(b), tb, g, true, ga);
                    } else {
                        gemm_acc(m, n, k, g, false, val(b), !tb, ga);
                    }
                }
                if wants(b) {
                    let gb = slot(work, b, k * n);
                    if tb {
                        gemm_acc(n, m, k, g, true, val(a), ta, gb);
                    } else {
                        gemm_acc(k, m, n, val(a), !ta, g, false, gb);
                    }
                }
            }
            &Op::BatchMatMul {
                a,
                b,
                ta,
                tb,
                batch,
                m,
                k,
                n,
            } => {
                let (mk, kn, mn) = (m * k, k * n, m * n);
                if wants(a) {
                    let ga = slot(work, a, batch * mk);
                    for s in 0..batch {
                        let gs = &g[s * mn..(s + 1) * mn];
                        let bs = &val(b)[s * kn..(s + 1) * kn];
                        let out = &mut ga[s * mk..(s + 1) * mk];
                        if ta {
                            gemm_acc(k, n, m, bs, tb, gs, true, out);
                        } else {
                            gemm_acc(m, n, k, gs, false, bs, !tb, out);
                        }
                    }
                }
                if wants(b) {
                    let gb = slot(work, b, batch * kn);
                    for s in 0..batch {
                        let gs = &g[s * mn..(s + 1) * mn];
                        let as_ = &val(a)[s * mk..(s + 1) * mk];
                        let out = &mut gb[s * kn..(s + 1) * kn];
                        if tb {
                            gemm_acc(n, m, k, gs, true, as_, ta, out);
                        } else {
                            gemm_acc(k, m, n, as_, !ta, gs, false, out);
                        }
                    }
                }
            }
            &Op::Add(a, b) => {
                for j in [a, b] {
                    if wants(j) {
                        add_into(slot(work, j, g.len()), g);
                    }
                }
            }
            &Op::AddBroadcast(a, b) => {
                if wants(a) {
                    add_into(slot(work, a, g.len()), g);
                }
                if wants(b) {
                    let nb = val(b).len();
                    let gb = slot(work, b, nb);
                    for chunk in g.chunks(nb) {
                        add_into(gb, chunk);
                    }
                }
            }
            &Op::Mul(a, b) => {
                if wants(a) {
                    let ga = slot(work, a, g.len());
                    for ((o, &gi), &y) in ga.iter_mut().zip(g).zip(val(b)) {
                        *o += gi * y;
                    }
                }
                if wants(b) {
                    let gb = slot(work, b, g.len());
                    for ((o, &gi), &x) in gb.iter_mut().zip(g).zip(val(a)) {
                        *o += gi * x;
                    }
                }
            }
            &Op::Scale(a, factor) => {
                let ga = slot(work, a, g.len());
                for (o, &gi) in ga.iter_mut().zip(g) {
                    *o += gi * factor;
                }
            }
            &Op::Relu(a) => {
                let ga = slot(work, a, g.len());
                for ((o, &gi), &x) in ga.iter_mut().zip(g).zip(val(a)) {
                    if x > T::zero() {
                        *o += gi;
                    }
                }
            }
            &Op::Gelu(a) => {
                let ga = slot(work, a, g.len());
                for ((o, &gi), &x) in ga.iter_mut().zip(g).zip(val(a)) {
                    *o += gi * kernels::gelu_grad(x);
                }
            }
            &Op::Softmax(a) => {
                let n = nodes[i].value.last_dim();
                let ga = slot(work, a, g.len());
                for ((p, dy), dx) in val(i).chunks(n).zip(g.chunks(n)).zip(ga.chunks_mut(n)) {
                    kernels::softmax_row_backward(p, dy, dx);
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let n = nodes[i].value.last_dim();
                let gv = val(*gain);
                if wants(*gain) {
                    let gg = slot(work, *gain, n);
                    for (dy, h) in g.chunks(n).zip(xhat.chunks(n)) {
                        for j in 0..n {
                            gg[j] += dy[j] * h[j];
                        }
                    }
                }
                if wants(*bias) {
                    let gb = slot(work, *bias, n);
                    for dy in g.chunks(n) {
                        add_into(gb, dy);
                    }
                }
                if wants(*x) {
                    let gx = slot(work, *x, g.len());
                    let mut dxhat = vec![T::zero(); n];
                    for (((dy, h), &r), dx) in g
                        .chunks(n)
                        .zip(xhat.chunks(n))
                        .zip(rstd)
                        .zip(gx.chunks_mut(n))
                    {
                        for j in 0..n {
                            dxhat[j] = dy[j] * gv[j];
                        }
                        kernels::normalize_row_backward(h, r, &dxhat, dx);
                    }
                }
            }
            Op::Gather { table, index } => {
                let gt = slot(work, *table, val(*table).len());
                for (&j, &gi) in index.iter().zip(g) {
                    gt[j] += gi;
                }
            }
            Op::GatherRows { table, ids } => {
                let width = nodes[*table].value.last_dim();
                let gt = slot(work, *table, val(*table).len());
                for (&row, gi) in ids.iter().zip(g.chunks(width)) {
                    add_into(&mut gt[row * width..(row + 1) * width], gi);
                }
            }
            Op::RotatePairs { a, cos, sin } => {
                let back = rotate(g, cos, sin, true);
                add_into(slot(work, *a, g.len()), &back);
            }
            &Op::Reshape(a) => add_into(slot(work, a, g.len()), g),
            &Op::Sum(a) => {
                let ga = slot(work, a, val(a).len());
                for o in ga.iter_mut() {
                    *o += g[0];
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                mask,
                probs,
                count,
            } => {
                let vocab = nodes[*logits].value.last_dim();
                let scale = g[0] / T::lit(*count as f64);
                let gl = slot(work, *logits, probs.len());
                for (r, (&t, &m)) in targets.iter().zip(mask).enumerate() {
                    if !m {
                        continue;
                    }
                    let row = &mut gl[r * vocab..(r + 1) * vocab];
                    for (o, &p) in row.iter_mut().zip(&probs[r * vocab..(r + 1) * vocab]) {
                        *o += p * scale;
                    }
                    row[t] -= scale;
                }
            }
        }
    }
}

fn slot<T: Real>(work: &mut [Option<Vec<T>>], j: usize, len: usize) -> &mut [T] {
    work[j].get_or_insert_with(|| vec![T::zero(); len])
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn zip_map<T: Real>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn rotate<T: Real>(src: &[T], cos: &[T], sin: &[T], inverse: bool) -> Vec<T> {
    let mut out = vec![T::zero(); src.len()];
    let period = cos.len();
    for (p, (pair, o)) in src.chunks(2).zip(out.chunks_mut(2)).enumerate() {
        let c = cos[p % period];
        let s = if inverse { -sin[p % period] } else { sin[p % period] };
        o[0] = pair[0] * c - pair[1] * s;
        o[1] = pair[0] * s + pair[1] * c;
    }
    out
}
