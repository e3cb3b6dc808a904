//! Single-use recording tape. Forward ops append nodes in topological order;
//! [`Tape::backward`] walks them once in reverse.

use rand::Rng;

use crate::gemm::{sgemm, View};
use crate::param::{ParamId, ParamStore};
use crate::{NnError, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    Param(ParamId),
    MatMul { a: usize, b: usize, batched: bool },
    Add { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { a: usize, s: f32 },
    Concat { parts: Vec<usize>, axis: usize },
    Slice { a: usize, axis: usize, start: usize },
    Transpose { a: usize },
    Reshape { a: usize },
    Embedding { table: usize, ids: Vec<usize> },
    Relu { a: usize },
    LayerNorm { a: usize, gamma: usize, beta: usize, xhat: Vec<f32>, rstd: Vec<f32> },
    Softmax { a: usize },
    Attention { q: usize, k: usize, v: usize, heads: usize, probs: Vec<f32> },
    CrossEntropy { logits: usize, targets: Vec<Option<usize>>, probs: Vec<f32> },
    Bce { logits: usize, targets: Vec<Option<bool>> },
    Dropout { a: usize, mask: Vec<f32> },
    Sum { a: usize },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of one backward pass, by node and by parameter.
pub struct Gradients {
    grads: Vec<Option<Vec<f32>>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    /// Gradient with respect to a leaf or parameter node; `None` when the node
    /// did not influence the loss.
    pub fn wrt(&self, v: Var) -> Option<&[f32]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds parameter gradients into `store`. Returns how many store entries
    /// were not reached by this pass (their gradient contribution is zero).
    pub fn accumulate_into(&self, store: &mut ParamStore) -> usize {
        let mut reached = vec![false; store.len()];
        for &(id, node) in &self.params {
            if let Some(g) = &self.grads[node] {
                let p = store.get_mut(id);
                for (dst, src) in p.grad.iter_mut().zip(g) {
                    *dst += src;
                }
                reached[id.0] = true;
            }
        }
        reached.iter().filter(|r| !**r).count()
    }
}

fn shape_err(op: &'static str, left: &[usize], right: &[usize]) -> NnError {
    NnError::Shape {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::with_capacity(512),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A constant: no gradient flows into it.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A free variable whose gradient is reported by [`Gradients::wrt`].
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).value.clone(), Op::Param(id), true)
    }

    /// `a[..., m, k] · b[k, n]`, or a batched product when `b` has the same
    /// leading dims as `a`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() < 2 || sb.len() < 2 || sa[sa.len() - 1] != sb[sb.len() - 2] {
            return Err(shape_err("matmul", &sa, &sb));
        }
        let k = sa[sa.len() - 1];
        let n = sb[sb.len() - 1];
        let mut shape = sa.clone();
        *shape.last_mut().unwrap() = n;
        let mut out = Tensor::zeros(&shape);
        let (av, bv) = (&self.nodes[a.0].value.data, &self.nodes[b.0].value.data);
        let batched = if sb.len() == 2 {
            let m: usize = sa[..sa.len() - 1].iter().product();
            sgemm(m, k, n, 1.0, av, View::rows(0, k), bv, View::rows(0, n), 0.0, &mut out.data, View::rows(0, n));
            false
        } else {
            if sa.len() != sb.len() || sa[..sa.len() - 2] != sb[..sb.len() - 2] {
                return Err(shape_err("matmul", &sa, &sb));
            }
            let m = sa[sa.len() - 2];
            let batch: usize = sa[..sa.len() - 2].iter().product();
            for i in 0..batch {
                sgemm(
                    m,
                    k,
                    n,
                    1.0,
                    av,
                    View::rows(i * m * k, k),
                    bv,
                    View::rows(i * k * n, n),
                    0.0,
                    &mut out.data,
                    View::rows(i * m * n, n),
                );
            }
            true
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul { a: a.0, b: b.0, batched }, rg))
    }

    /// `a + b` where `b`'s shape is a suffix of `a`'s (broadcast over the
    /// leading axes).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(shape_err("add", sa, sb));
        }
        let mut out = self.nodes[a.0].value.clone();
        let bd = &self.nodes[b.0].value.data;
        if !bd.is_empty() {
            for chunk in out.data.chunks_exact_mut(bd.len()) {
                for (o, x) in chunk.iter_mut().zip(bd) {
                    *o += x;
                }
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add { a: a.0, b: b.0 }, rg))
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err("mul", sa, sb));
        }
        let data = self.nodes[a.0]
            .value
            .data
            .iter()
            .zip(&self.nodes[b.0].value.data)
            .map(|(x, y)| x * y)
            .collect();
        let out = Tensor {
            shape: sa.to_vec(),
            data,
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul { a: a.0, b: b.0 }, rg))
    }

    pub fn scale(&mut self, a: Var, s: f32) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        out.data.iter_mut().for_each(|x| *x *= s);
        let rg = self.rg(a);
        self.push(out, Op::Scale { a: a.0, s }, rg)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, NnError> {
        let first = self.shape(parts[0]).to_vec();
        if axis >= first.len() {
            return Err(shape_err("concat", &first, &[axis]));
        }
        let mut total = 0;
        for p in parts {
            let s = self.shape(*p);
            let same_rest = s.len() == first.len()
                && s.iter().zip(&first).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !same_rest {
                return Err(shape_err("concat", &first, s));
            }
            total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut shape = first.clone();
        shape[axis] = total;
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let len = self.shape(*p)[axis] * inner;
                data.extend_from_slice(&self.nodes[p.0].value.data[o * len..(o + 1) * len]);
            }
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        let op = Op::Concat {
            parts: parts.iter().map(|p| p.0).collect(),
            axis,
        };
        Ok(self.push(Tensor { shape, data }, op, rg))
    }

    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var, NnError> {
        let sa = self.shape(a).to_vec();
        if axis >= sa.len() || start + len > sa[axis] {
            return Err(shape_err("slice", &sa, &[axis, start, len]));
        }
        let outer: usize = sa[..axis].iter().product();
        let inner: usize = sa[axis + 1..].iter().product();
        let src = &self.nodes[a.0].value.data;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * sa[axis] + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = sa;
        shape[axis] = len;
        let rg = self.rg(a);
        Ok(self.push(Tensor { shape, data }, Op::Slice { a: a.0, axis, start }, rg))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, a: Var) -> Result<Var, NnError> {
        let sa = self.shape(a).to_vec();
        if sa.len() < 2 {
            return Err(shape_err("transpose", &sa, &[]));
        }
        let (r, c) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let src = &self.nodes[a.0].value.data;
        let mut data = vec![0.0; src.len()];
        for (blk_in, blk_out) in src.chunks_exact(r * c).zip(data.chunks_exact_mut(r * c)) {
            for i in 0..r {
                for j in 0..c {
                    blk_out[j * r + i] = blk_in[i * c + j];
                }
            }
        }
        let mut shape = sa;
        let n = shape.len();
        shape.swap(n - 2, n - 1);
        let rg = self.rg(a);
        Ok(self.push(Tensor { shape, data }, Op::Transpose { a: a.0 }, rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, NnError> {
        let sa = self.shape(a);
        if sa.iter().product::<usize>() != shape.iter().product::<usize>() {
            return Err(shape_err("reshape", sa, shape));
        }
        let out = Tensor {
            shape: shape.to_vec(),
            data: self.nodes[a.0].value.data.clone(),
        };
        let rg = self.rg(a);
        Ok(self.push(out, Op::Reshape { a: a.0 }, rg))
    }

    /// Rows of `table [V, d]` selected by `ids`, giving `[ids.len(), d]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, NnError> {
        let st = self.shape(table).to_vec();
        if st.len() != 2 {
            return Err(shape_err("embedding", &st, &[]));
        }
        let (rows, d) = (st[0], st[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(shape_err("embedding", &st, &[bad]));
        }
        let src = &self.nodes[table.0].value.data;
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            data.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        let rg = self.rg(table);
        let out = Tensor {
            shape: vec![ids.len(), d],
            data,
        };
        Ok(self.push(out, Op::Embedding { table: table.0, ids: ids.to_vec() }, rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut out = self.nodes[a.0].value.clone();
        out.data.iter_mut().for_each(|x| *x = x.max(0.0));
        let rg = self.rg(a);
        self.push(out, Op::Relu { a: a.0 }, rg)
    }

    /// Normalizes over the last axis, then applies `gamma`/`beta` of shape `[d]`.
    pub fn layer_norm(&mut self, a: Var, gamma: Var, beta: Var) -> Result<Var, NnError> {
        let sa = self.shape(a).to_vec();
        let d = *sa.last().ok_or_else(|| shape_err("layer_norm", &sa, &[]))?;
        for p in [gamma, beta] {
            if self.shape(p) != [d] {
                return Err(shape_err("layer_norm", &sa, self.shape(p)));
            }
        }
        let x = &self.nodes[a.0].value.data;
        let g = &self.nodes[gamma.0].value.data;
        let b = &self.nodes[beta.0].value.data;
        let rows = x.len() / d;
        let mut xhat = vec![0f32; x.len()];
        let mut rstd = vec![0f32; rows];
        let mut y = vec![0f32; x.len()];
        for r in 0..rows {
            let row = &x[r * d..(r + 1) * d];
            let mean = row.iter().map(|&v| v as f64).sum::<f64>() / d as f64;
            let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd[r] = rs as f32;
            for j in 0..d {
                let h = ((row[j] as f64 - mean) * rs) as f32;
                xhat[r * d + j] = h;
                y[r * d + j] = h * g[j] + b[j];
            }
        }
        let rg = self.rg(a) || self.rg(gamma) || self.rg(beta);
        let op = Op::LayerNorm {
            a: a.0,
            gamma: gamma.0,
            beta: beta.0,
            xhat,
            rstd,
        };
        Ok(self.push(Tensor { shape: sa, data: y }, op, rg))
    }

    /// Softmax over the last axis of `a + mask`. The mask is additive, shaped
    /// like a suffix of `a`; `-inf` entries get probability exactly 0, and a
    /// row that is entirely `-inf` comes out as zeros.
    pub fn softmax(&mut self, a: Var, mask: Option<&Tensor>) -> Result<Var, NnError> {
        let sa = self.shape(a).to_vec();
        let d = *sa.last().ok_or_else(|| shape_err("softmax", &sa, &[]))?;
        if let Some(m) = mask {
            if m.shape.len() > sa.len() || sa[sa.len() - m.shape.len()..] != m.shape[..] {
                return Err(NnError::Mask {
                    op: "softmax",
                    expected: sa.clone(),
                    got: m.shape.clone(),
                });
            }
        }
        let x = &self.nodes[a.0].value.data;
        let mut out = vec![0f32; x.len()];
        let mut row = vec![0f64; d];
        for r in 0..x.len() / d.max(1) {
            for j in 0..d {
                let add = mask.map_or(0.0, |m| m.data[(r * d + j) % m.data.len()] as f64);
                row[j] = x[r * d + j] as f64 + add;
            }
            softmax_row(&mut row);
            for j in 0..d {
                out[r * d + j] = row[j] as f32;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor { shape: sa, data: out }, Op::Softmax { a: a.0 }, rg))
    }

    /// Multi-head scaled dot-product attention. `q [B, Lq, D]`, `k`/`v`
    /// `[B, Lk, D]`, heads split `D` evenly. `key_valid` (length `B * Lk`)
    /// removes keys entirely: their weights are exactly 0.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        key_valid: Option<&[bool]>,
    ) -> Result<Var, NnError> {
        let (sq, sk, sv) = (self.shape(q).to_vec(), self.shape(k).to_vec(), self.shape(v).to_vec());
        if sq.len() != 3 || sk.len() != 3 || sk != sv || sq[0] != sk[0] || sq[2] != sk[2] {
            return Err(shape_err("attention", &sq, &sk));
        }
        let (b, lq, lk, d) = (sq[0], sq[1], sk[1], sq[2]);
        if heads == 0 || d % heads != 0 {
            return Err(shape_err("attention", &sq, &[heads]));
        }
        if let Some(m) = key_valid {
            if m.len() != b * lk {
                return Err(NnError::Mask {
                    op: "attention",
                    expected: vec![b, lk],
                    got: vec![m.len()],
                });
            }
        }
        let (out, probs) = crate::attention::forward(
            &self.nodes[q.0].value.data,
            &self.nodes[k.0].value.data,
            &self.nodes[v.0].value.data,
            [b, lq, lk, d, heads],
            key_valid,
        );
        let rg = self.rg(q) || self.rg(k) || self.rg(v);
        let op = Op::Attention {
            q: q.0,
            k: k.0,
            v: v.0,
            heads,
            probs,
        };
        Ok(self.push(Tensor { shape: sq, data: out }, op, rg))
    }

    /// Summed cross-entropy of `logits [N, C]` over rows with a target.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var, NnError> {
        let sl = self.shape(logits).to_vec();
        if sl.len() != 2 || sl[0] != targets.len() || targets.iter().flatten().any(|&t| t >= sl[1]) {
            return Err(shape_err("cross_entropy", &sl, &[targets.len()]));
        }
        let c = sl[1];
        let x = &self.nodes[logits.0].value.data;
        let mut probs = vec![0f32; x.len()];
        let mut row = vec![0f64; c];
        let mut loss = 0f64;
        for (r, t) in targets.iter().enumerate() {
            for j in 0..c {
                row[j] = x[r * c + j] as f64;
            }
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for j in 0..c {
                probs[r * c + j] = (row[j] - lse).exp() as f32;
            }
            if let Some(t) = t {
                loss += lse - row[*t];
            }
        }
        let rg = self.rg(logits);
        let op = Op::CrossEntropy {
            logits: logits.0,
            targets: targets.to_vec(),
            probs,
        };
        Ok(self.push(Tensor::scalar(loss as f32), op, rg))
    }

    /// Summed binary cross-entropy with logits over entries with a target.
    /// `logits` holds one value per target (`[N]` or `[N, 1]`).
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[Option<bool>]) -> Result<Var, NnError> {
        let sl = self.shape(logits).to_vec();
        if self.nodes[logits.0].value.numel() != targets.len() {
            return Err(shape_err("bce_with_logits", &sl, &[targets.len()]));
        }
        let x = &self.nodes[logits.0].value.data;
        let mut loss = 0f64;
        for (xi, t) in x.iter().zip(targets) {
            if let Some(y) = t {
                let xi = *xi as f64;
                let y = if *y { 1.0 } else { 0.0 };
                loss += xi.max(0.0) - xi * y + (-xi.abs()).exp().ln_1p();
            }
        }
        let rg = self.rg(logits);
        let op = Op::Bce {
            logits: logits.0,
            targets: targets.to_vec(),
        };
        Ok(self.push(Tensor::scalar(loss as f32), op, rg))
    }

    /// Inverted dropout; the identity when `p == 0`.
    pub fn dropout<R: Rng>(&mut self, a: Var, p: f32, rng: &mut R) -> Var {
        if p <= 0.0 {
            return a;
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f32> = (0..self.nodes[a.0].value.numel())
            .map(|_| if rng.gen::<f32>() < p { 0.0 } else { keep })
            .collect();
        let mut out = self.nodes[a.0].value.clone();
        out.data.iter_mut().zip(&mask).for_each(|(x, m)| *x *= m);
        let rg = self.rg(a);
        self.push(out, Op::Dropout { a: a.0, mask }, rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.nodes[a.0].value.data.iter().map(|&v| v as f64).sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s as f32), Op::Sum { a: a.0 }, rg)
    }

    /// Reverse pass from a scalar `loss`. A tape supports exactly one.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, NnError> {
        if self.consumed {
            return Err(NnError::SingleUse);
        }
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(NnError::NotScalar(self.nodes[loss.0].value.shape.clone()));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<f32>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let mut params = Vec::new();
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else {
                if let Op::Param(id) = self.nodes[i].op {
                    params.push((id, i));
                }
                continue;
            };
            match self.nodes[i].op {
                Op::Leaf => grads[i] = Some(g),
                Op::Param(id) => {
                    params.push((id, i));
                    grads[i] = Some(g);
                }
                _ if self.nodes[i].requires_grad => self.backward_node(i, &g, &mut grads),
                _ => {}
            }
        }
        params.reverse();
        Ok(Gradients { grads, params })
    }

    /// Gradient buffer of node `j`, created zeroed on first use; `None` when
    /// `j` does not need a gradient.
    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f32>>], j: usize) -> Option<&'g mut Vec<f32>> {
        if !self.nodes[j].requires_grad {
            return None;
        }
        let n = self.nodes[j].value.numel();
        Some(grads[j].get_or_insert_with(|| vec![0.0; n]))
    }

    fn backward_node(&self, i: usize, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
        let node = &self.nodes[i];
        let val = |j: usize| &self.nodes[j].value;
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul { a, b, batched } => {
                let (sa, sb) = (&val(*a).shape, &val(*b).shape);
                let k = sa[sa.len() - 1];
                let n = sb[sb.len() - 1];
                let (ad, bd) = (&val(*a).data, &val(*b).data);
                if !batched {
                    let m = node.value.numel() / n.max(1);
                    if let Some(ga) = self.slot(grads, *a) {
                        sgemm(m, n, k, 1.0, g, View::rows(0, n), bd, View::transposed(0, n), 1.0, ga, View::rows(0, k));
                    }
                    if let Some(gb) = self.slot(grads, *b) {
                        sgemm(k, m, n, 1.0, ad, View::transposed(0, k), g, View::rows(0, n), 1.0, gb, View::rows(0, n));
                    }
                } else {
                    let m = sa[sa.len() - 2];
                    let batch = ad.len() / (m * k).max(1);
                    if let Some(ga) = self.slot(grads, *a) {
                        for t in 0..batch {
                            sgemm(
                                m,
                                n,
                                k,
                                1.0,
                                g,
                                View::rows(t * m * n, n),
                                bd,
                                View::transposed(t * k * n, n),
                                1.0,
                                ga,
                                View::rows(t * m * k, k),
                            );
                        }
                    }
                    if let Some(gb) = self.slot(grads, *b) {
                        for t in 0..batch {
                            sgemm(
                                k,
                                m,
                                n,
                                1.0,
                                ad,
                                View::transposed(t * m * k, k),
                                g,
                                View::rows(t * m * n, n),
                                1.0,
                                gb,
                                View::rows(t * k * n, n),
                            );
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
                let nb = val(*b).numel();
                if let Some(gb) = self.slot(grads, *b) {
                    let mut acc = vec![0f64; nb];
                    for chunk in g.chunks_exact(nb.max(1)) {
                        acc.iter_mut().zip(chunk).for_each(|(s, y)| *s += *y as f64);
                    }
                    gb.iter_mut().zip(&acc).for_each(|(x, s)| *x += *s as f32);
                }
            }
            Op::Mul { a, b } => {
                let (ad, bd) = (&val(*a).data, &val(*b).data);
                if let Some(ga) = self.slot(grads, *a) {
                    for ((x, y), z) in ga.iter_mut().zip(g).zip(bd) {
                        *x += y * z;
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for ((x, y), z) in gb.iter_mut().zip(g).zip(ad) {
                        *x += y * z;
                    }
                }
            }
            Op::Scale { a, s } => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x += y * s);
                }
            }
            Op::Concat { parts, axis } => {
                let shape = &node.value.shape;
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let total = shape[*axis] * inner;
                let mut offset = 0;
                for &p in parts {
                    let len = val(p).shape[*axis] * inner;
                    if let Some(gp) = self.slot(grads, p) {
                        for o in 0..outer {
                            let src = &g[o * total + offset..o * total + offset + len];
                            gp[o * len..(o + 1) * len]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(x, y)| *x += y);
                        }
                    }
                    offset += len;
                }
            }
            Op::Slice { a, axis, start } => {
                let sa = &val(*a).shape;
                let outer: usize = sa[..*axis].iter().product();
                let inner: usize = sa[axis + 1..].iter().product();
                let len = node.value.shape[*axis];
                if let Some(ga) = self.slot(grads, *a) {
                    for o in 0..outer {
                        let base = (o * sa[*axis] + start) * inner;
                        ga[base..base + len * inner]
                            .iter_mut()
                            .zip(&g[o * len * inner..(o + 1) * len * inner])
                            .for_each(|(x, y)| *x += y);
                    }
                }
            }
            Op::Transpose { a } => {
                let sa = &val(*a).shape;
                let (r, c) = (sa[sa.len() - 2], sa[sa.len() - 1]);
                if let Some(ga) = self.slot(grads, *a) {
                    for (gin, gout) in ga.chunks_exact_mut(r * c).zip(g.chunks_exact(r * c)) {
                        for i in 0..r {
                            for j in 0..c {
                                gin[i * c + j] += gout[j * r + i];
                            }
                        }
                    }
                }
            }
            Op::Reshape { a } => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
            }
            Op::Embedding { table, ids } => {
                let d = val(*table).shape[1];
                if let Some(gt) = self.slot(grads, *table) {
                    for (r, &id) in ids.iter().enumerate() {
                        gt[id * d..(id + 1) * d]
                            .iter_mut()
                            .zip(&g[r * d..(r + 1) * d])
                            .for_each(|(x, y)| *x += y);
                    }
                }
            }
            Op::Relu { a } => {
                let x = &val(*a).data;
                if let Some(ga) = self.slot(grads, *a) {
                    for ((o, y), xi) in ga.iter_mut().zip(g).zip(x) {
                        if *xi > 0.0 {
                            *o += y;
                        }
                    }
                }
            }
            Op::LayerNorm {
                a,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let d = node.value.last_dim();
                let rows = xhat.len() / d;
                let gm = &val(*gamma).data;
                if let Some(gg) = self.slot(grads, *gamma) {
                    let mut acc = vec![0f64; d];
                    for r in 0..rows {
                        for j in 0..d {
                            acc[j] += (g[r * d + j] * xhat[r * d + j]) as f64;
                        }
                    }
                    gg.iter_mut().zip(&acc).for_each(|(x, s)| *x += *s as f32);
                }
                if let Some(gb) = self.slot(grads, *beta) {
                    let mut acc = vec![0f64; d];
                    for r in 0..rows {
                        for j in 0..d {
                            acc[j] += g[r * d + j] as f64;
                        }
                    }
                    gb.iter_mut().zip(&acc).for_each(|(x, s)| *x += *s as f32);
                }
                if let Some(ga) = self.slot(grads, *a) {
                    for r in 0..rows {
                        let (mut m1, mut m2) = (0f64, 0f64);
                        for j in 0..d {
                            let dh = (g[r * d + j] * gm[j]) as f64;
                            m1 += dh;
                            m2 += dh * xhat[r * d + j] as f64;
                        }
                        m1 /= d as f64;
                        m2 /= d as f64;
                        let rs = rstd[r] as f64;
                        for j in 0..d {
                            let dh = (g[r * d + j] * gm[j]) as f64;
                            ga[r * d + j] += (rs * (dh - m1 - xhat[r * d + j] as f64 * m2)) as f32;
                        }
                    }
                }
            }
            Op::Softmax { a } => {
                let d = node.value.last_dim();
                let p = &node.value.data;
                if let Some(ga) = self.slot(grads, *a) {
                    for r in 0..p.len() / d.max(1) {
                        let row = r * d..(r + 1) * d;
                        let dot: f64 = p[row.clone()]
                            .iter()
                            .zip(&g[row.clone()])
                            .map(|(x, y)| (*x as f64) * (*y as f64))
                            .sum();
                        for j in row {
                            ga[j] += (p[j] as f64 * (g[j] as f64 - dot)) as f32;
                        }
                    }
                }
            }
            Op::Attention { q, k, v, heads, probs } => {
                let sq = &val(*q).shape;
                let lk = val(*k).shape[1];
                let dims = [sq[0], sq[1], lk, sq[2], *heads];
                let (dq, dk, dv) = crate::attention::backward(
                    g,
                    &val(*q).data,
                    &val(*k).data,
                    &val(*v).data,
                    probs,
                    dims,
                    [self.nodes[*q].requires_grad, self.nodes[*k].requires_grad, self.nodes[*v].requires_grad],
                );
                for (j, d) in [(*q, dq), (*k, dk), (*v, dv)] {
                    if let (Some(d), Some(slot)) = (d, self.slot(grads, j)) {
                        slot.iter_mut().zip(&d).for_each(|(x, y)| *x += y);
                    }
                }
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let c = val(*logits).shape[1];
                let scale = g[0];
                if let Some(gl) = self.slot(grads, *logits) {
                    for (r, t) in targets.iter().enumerate() {
                        if let Some(t) = t {
                            for j in 0..c {
                                let onehot = if j == *t { 1.0 } else { 0.0 };
                                gl[r * c + j] += scale * (probs[r * c + j] - onehot);
                            }
                        }
                    }
                }
            }
            Op::Bce { logits, targets } => {
                let x = &val(*logits).data;
                let scale = g[0];
                if let Some(gl) = self.slot(grads, *logits) {
                    for (r, t) in targets.iter().enumerate() {
                        if let Some(y) = t {
                            let s = 1.0 / (1.0 + (-(x[r] as f64)).exp());
                            let y = if *y { 1.0 } else { 0.0 };
                            gl[r] += scale * (s - y) as f32;
                        }
                    }
                }
            }
            Op::Dropout { a, mask } => {
                if let Some(ga) = self.slot(grads, *a) {
                    for ((x, y), m) in ga.iter_mut().zip(g).zip(mask) {
                        *x += y * m;
                    }
                }
            }
            Op::Sum { a } => {
                if let Some(ga) = self.slot(grads, *a) {
                    ga.iter_mut().for_each(|x| *x += g[0]);
                }
            }
        }
    }
}

/// In-place softmax of one row in f64. `-inf` entries map to 0; an all-`-inf`
/// row maps to zeros.
pub(crate) fn softmax_row(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        row.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}
