//! Tape-based reverse-mode automatic differentiation over tensors.
//!
//! A [`Tape`] records every operation of one forward pass as a node
//! holding the result value and references to its inputs. Nodes are
//! appended in execution order, so the tape is already topologically
//! sorted; [`Tape::backward`] walks it once in reverse, accumulating
//! gradients by the chain rule, and returns the gradients of all named
//! parameter leaves as a [`GradientMap`].
//!
//! A tape is a single-threaded unit of work: build it, read the loss,
//! call `backward`, drop it. Distinct tapes (one per example) can run
//! on different threads against shared read-only parameters.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Pointwise binary operations with matching shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
}

/// Pointwise nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

enum Op {
    Leaf {
        name: Option<String>,
    },
    Matmul(Var, Var),
    AddBroadcast(Var, Var),
    Elementwise(ElementwiseOp, Var, Var),
    Activation(Activation, Var),
    SoftmaxColumns(Var),
    Transpose(Var),
    ConcatRows(Var, Var),
    StackColumns(Vec<Var>),
    Concat(Vec<Var>),
    Reshape(Var),
    Sum(Var),
    Scale(Var, f64),
    ConvMaxPool {
        input: Var,
        filters: Var,
        bias: Var,
        window: usize,
        /// Winning window start per output dimension (earliest on ties).
        argmax: Vec<usize>,
    },
    NtnBilinear {
        weight: Var,
        left: Var,
        right: Var,
    },
    EucCos {
        left: Var,
        right: Var,
    },
    NegLogPicked {
        probs: Var,
        indices: Vec<usize>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients keyed by parameter name. Absent entries mean zero.
#[derive(Clone, Debug, Default)]
pub struct GradientMap {
    entries: BTreeMap<String, Tensor>,
}

impl GradientMap {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Add `grad` into the entry for `name`, creating it if absent.
    pub fn accumulate(&mut self, name: &str, grad: &Tensor) {
        match self.entries.get_mut(name) {
            Some(existing) => {
                for (e, g) in existing.data_mut().iter_mut().zip(grad.data()) {
                    *e += g;
                }
            }
            None => {
                self.entries.insert(name.to_string(), grad.clone());
            }
        }
    }

    /// Divide every entry by `n`, for averaging per-example gradients.
    pub fn scale(&mut self, factor: f64) {
        for grad in self.entries.values_mut() {
            for g in grad.data_mut() {
                *g *= factor;
            }
        }
    }

    /// True if any entry contains a non-finite value; returns the
    /// offending parameter name.
    pub fn find_non_finite(&self) -> Option<&str> {
        self.entries
            .iter()
            .find(|(_, g)| !g.all_finite())
            .map(|(name, _)| name.as_str())
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Value of a recorded node.
    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Record a constant leaf. Constants never receive gradients;
    /// frozen embeddings enter the tape this way.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf { name: None })
    }

    /// Record a named parameter leaf. Its gradient appears in the
    /// [`GradientMap`] under `name` after `backward`.
    pub fn param(&mut self, name: impl Into<String>, value: &Tensor) -> Var {
        self.push(
            value.clone(),
            Op::Leaf {
                name: Some(name.into()),
            },
        )
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Matrix product of rank-2 tensors with matching inner dimension.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if !av.is_matrix() || !bv.is_matrix() || av.cols() != bv.rows() {
            return Err(Error::Dimension(format!(
                "matmul of {} by {}",
                av.shape_string(),
                bv.shape_string()
            )));
        }
        let out = matmul_value(av, bv);
        Ok(self.push(out, Op::Matmul(a, b)))
    }

    /// Add vector `v` to every column of matrix `m`.
    pub fn add_broadcast(&mut self, m: Var, v: Var) -> Result<Var> {
        let (mv, vv) = (self.value(m), self.value(v));
        if !mv.is_matrix() || !vv.is_vector() || mv.rows() != vv.numel() {
            return Err(Error::Dimension(format!(
                "broadcast add of vector {} onto {}",
                vv.shape_string(),
                mv.shape_string()
            )));
        }
        let (rows, cols) = (mv.rows(), mv.cols());
        let mut out = mv.clone();
        for r in 0..rows {
            let add = vv.data()[r];
            for c in 0..cols {
                out.data_mut()[r * cols + c] += add;
            }
        }
        Ok(self.push(out, Op::AddBroadcast(m, v)))
    }

    /// Pointwise add/sub/mul of same-shape tensors.
    pub fn elementwise(&mut self, op: ElementwiseOp, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::Dimension(format!(
                "elementwise {:?} of {} and {}",
                op,
                av.shape_string(),
                bv.shape_string()
            )));
        }
        let data: Vec<f64> = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| match op {
                ElementwiseOp::Add => x + y,
                ElementwiseOp::Sub => x - y,
                ElementwiseOp::Mul => x * y,
            })
            .collect();
        let out = Tensor::from_vec(av.shape(), data)?;
        Ok(self.push(out, Op::Elementwise(op, a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementwiseOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementwiseOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(ElementwiseOp::Mul, a, b)
    }

    /// Pointwise nonlinearity.
    pub fn activation(&mut self, kind: Activation, a: Var) -> Var {
        let out = self.value(a).map(|x| match kind {
            Activation::Sigmoid => stable_sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
        });
        self.push(out, Op::Activation(kind, a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activation(Activation::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activation(Activation::Tanh, a)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activation(Activation::Relu, a)
    }

    /// Column-wise softmax of a rank-2 tensor, computed with per-column
    /// max subtraction so large scores cannot overflow.
    pub fn softmax_columns(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if !av.is_matrix() {
            return Err(Error::Dimension(format!(
                "softmax_columns on {}",
                av.shape_string()
            )));
        }
        let out = softmax_columns_value(av);
        Ok(self.push(out, Op::SoftmaxColumns(a)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if !av.is_matrix() {
            return Err(Error::Dimension(format!(
                "transpose on {}",
                av.shape_string()
            )));
        }
        let out = transpose_value(av);
        Ok(self.push(out, Op::Transpose(a)))
    }

    /// Stack `a` on top of `b`: both rank 2 with equal column counts.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if !av.is_matrix() || !bv.is_matrix() || av.cols() != bv.cols() {
            return Err(Error::Dimension(format!(
                "concat_rows of {} and {}",
                av.shape_string(),
                bv.shape_string()
            )));
        }
        let cols = av.cols();
        let rows = av.rows() + bv.rows();
        let mut data = Vec::with_capacity(rows * cols);
        data.extend_from_slice(av.data());
        data.extend_from_slice(bv.data());
        let out = Tensor::matrix(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(a, b)))
    }

    /// Collect equal-length vectors as the columns of a new matrix.
    pub fn stack_columns(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Contract("stack_columns of no vectors".into()));
        }
        let rows = self.value(parts[0]).numel();
        for &p in parts {
            let pv = self.value(p);
            if !pv.is_vector() || pv.numel() != rows {
                return Err(Error::Dimension(format!(
                    "stack_columns expects vectors of length {rows}, got {}",
                    pv.shape_string()
                )));
            }
        }
        let cols = parts.len();
        let mut out = Tensor::zeros(&[rows, cols]);
        for (j, &p) in parts.iter().enumerate() {
            for r in 0..rows {
                let x = self.value(p).data()[r];
                out.data_mut()[r * cols + j] = x;
            }
        }
        Ok(self.push(out, Op::StackColumns(parts.to_vec())))
    }

    /// Concatenate vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Contract("concat of no vectors".into()));
        }
        let mut data = Vec::new();
        for &p in parts {
            let pv = self.value(p);
            if !pv.is_vector() {
                return Err(Error::Dimension(format!(
                    "concat expects vectors, got {}",
                    pv.shape_string()
                )));
            }
            data.extend_from_slice(pv.data());
        }
        let out = Tensor::vector(data);
        Ok(self.push(out, Op::Concat(parts.to_vec())))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshaped(shape)?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    /// Sum of all entries, as a scalar node.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|x| x * factor);
        self.push(out, Op::Scale(a, factor))
    }

    /// One-layer convolution with ReLU filters and max-over-time pooling.
    ///
    /// `input` is `c_in x A`, `filters` is `c_out x (window*c_in)` (one
    /// row per filter, applied to `window` consecutive columns flattened
    /// column-after-column), `bias` is `c_out`. Sequences shorter than
    /// the window are right-padded with zero columns, so there is always
    /// at least one window position. Output is the `c_out` vector of
    /// per-filter maxima; ties go to the earliest position.
    pub fn conv_maxpool(
        &mut self,
        input: Var,
        filters: Var,
        window: usize,
        bias: Var,
    ) -> Result<Var> {
        if window < 1 {
            return Err(Error::Config("convolution window must be at least 1".into()));
        }
        let (iv, fv, bv) = (self.value(input), self.value(filters), self.value(bias));
        if !iv.is_matrix() {
            return Err(Error::Dimension(format!(
                "conv_maxpool input must be a matrix, got {}",
                iv.shape_string()
            )));
        }
        let (c_in, real_cols) = (iv.rows(), iv.cols());
        if real_cols == 0 {
            return Err(Error::Contract("conv_maxpool over an empty sequence".into()));
        }
        if !fv.is_matrix() || fv.cols() != window * c_in {
            return Err(Error::Dimension(format!(
                "conv_maxpool filters {} incompatible with window {} over input {}",
                fv.shape_string(),
                window,
                iv.shape_string()
            )));
        }
        let c_out = fv.rows();
        if !bv.is_vector() || bv.numel() != c_out {
            return Err(Error::Dimension(format!(
                "conv_maxpool bias {} does not match {} filters",
                bv.shape_string(),
                c_out
            )));
        }

        let padded = real_cols.max(window);
        let positions = padded - window + 1;
        let mut best = vec![f64::NEG_INFINITY; c_out];
        let mut argmax = vec![0usize; c_out];
        for p in 0..positions {
            for i in 0..c_out {
                let mut acc = bv.data()[i];
                for o in 0..window {
                    let col = p + o;
                    if col >= real_cols {
                        continue; // zero pad contributes nothing
                    }
                    for q in 0..c_in {
                        acc += fv.at(i, o * c_in + q) * iv.at(q, col);
                    }
                }
                let z = if acc > 0.0 { acc } else { 0.0 };
                if z > best[i] {
                    best[i] = z;
                    argmax[i] = p;
                }
            }
        }
        let out = Tensor::vector(best);
        Ok(self.push(
            out,
            Op::ConvMaxPool {
                input,
                filters,
                bias,
                window,
                argmax,
            },
        ))
    }

    /// Window start positions that produced each pooled maximum, if `v`
    /// is a `conv_maxpool` node. Used by activation inspection.
    pub fn conv_argmax(&self, v: Var) -> Option<&[usize]> {
        match &self.nodes[v.0].op {
            Op::ConvMaxPool { argmax, .. } => Some(argmax),
            _ => None,
        }
    }

    /// Batch of bilinear forms: `out[s, j] = left_j^T W[s] right_j` for
    /// each slice `s` of the rank-3 weight.
    pub fn ntn_bilinear(&mut self, weight: Var, left: Var, right: Var) -> Result<Var> {
        let (wv, lv, rv) = (self.value(weight), self.value(left), self.value(right));
        let ok = wv.rank() == 3
            && lv.is_matrix()
            && rv.is_matrix()
            && lv.rows() == wv.shape()[1]
            && rv.rows() == wv.shape()[2]
            && lv.cols() == rv.cols();
        if !ok {
            return Err(Error::Dimension(format!(
                "bilinear of weight {}, left {}, right {}",
                wv.shape_string(),
                lv.shape_string(),
                rv.shape_string()
            )));
        }
        let (slices, p_dim, q_dim) = (wv.shape()[0], wv.shape()[1], wv.shape()[2]);
        let cols = lv.cols();
        let mut out = Tensor::zeros(&[slices, cols]);
        for s in 0..slices {
            for j in 0..cols {
                let mut acc = 0.0;
                for p in 0..p_dim {
                    let a = lv.at(p, j);
                    for q in 0..q_dim {
                        acc += a * wv.data()[s * p_dim * q_dim + p * q_dim + q] * rv.at(q, j);
                    }
                }
                out.set(s, j, acc);
            }
        }
        Ok(self.push(out, Op::NtnBilinear { weight, left, right }))
    }

    /// Per-column Euclidean distance and cosine similarity, stacked as a
    /// `2 x A` matrix (distance first). Cosine with a near-zero vector is
    /// defined as 0, and the distance gradient at a zero difference is 0.
    pub fn euccos(&mut self, left: Var, right: Var) -> Result<Var> {
        let (lv, rv) = (self.value(left), self.value(right));
        if !lv.is_matrix() || lv.shape() != rv.shape() {
            return Err(Error::Dimension(format!(
                "euccos of {} and {}",
                lv.shape_string(),
                rv.shape_string()
            )));
        }
        let (rows, cols) = (lv.rows(), lv.cols());
        let mut out = Tensor::zeros(&[2, cols]);
        for j in 0..cols {
            let mut dist_sq = 0.0;
            let mut dot = 0.0;
            let mut nl = 0.0;
            let mut nr = 0.0;
            for r in 0..rows {
                let (a, h) = (lv.at(r, j), rv.at(r, j));
                let d = a - h;
                dist_sq += d * d;
                dot += a * h;
                nl += a * a;
                nr += h * h;
            }
            out.set(0, j, dist_sq.sqrt());
            let (nl, nr) = (nl.sqrt(), nr.sqrt());
            let cos = if nl < COS_EPS || nr < COS_EPS {
                0.0
            } else {
                dot / (nl * nr)
            };
            out.set(1, j, cos);
        }
        Ok(self.push(out, Op::EucCos { left, right }))
    }

    /// `-ln(sum of probs at indices + 1e-12)`, as a scalar node. With a
    /// single index this is the cross-entropy of that entry.
    pub fn neg_log_picked(&mut self, probs: Var, indices: &[usize]) -> Result<Var> {
        let pv = self.value(probs);
        if indices.is_empty() {
            return Err(Error::Input("no target index for the loss".into()));
        }
        for &i in indices {
            if i >= pv.numel() {
                return Err(Error::Input(format!(
                    "target index {} out of range for {} outputs",
                    i,
                    pv.numel()
                )));
            }
        }
        let total: f64 = indices.iter().map(|&i| pv.data()[i]).sum();
        let out = Tensor::scalar(-(total + LOG_FLOOR).ln());
        Ok(self.push(
            out,
            Op::NegLogPicked {
                probs,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Reverse pass from a scalar loss node. Returns the gradients of
    /// every named parameter leaf; constants receive no entry.
    pub fn backward(&self, loss: Var) -> Result<GradientMap> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {}",
                self.value(loss).shape_string()
            )));
        }
        let mut grads: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.numel()])
            .collect();
        grads[loss.0][0] = 1.0;

        for i in (0..self.nodes.len()).rev() {
            if grads[i].iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = std::mem::take(&mut grads[i]);
            self.backprop_node(i, &g, &mut grads);
        }

        let mut map = GradientMap::default();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Leaf { name: Some(name) } = &node.op {
                let grad = Tensor::from_vec(node.value.shape(), std::mem::take(&mut grads[i]))?;
                map.accumulate(name, &grad);
            }
        }
        Ok(map)
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Vec<f64>]) {
        match &self.nodes[i].op {
            Op::Leaf { .. } => {
                // Leaves keep their accumulated gradient; put it back.
                grads[i] = g.to_vec();
            }
            Op::Matmul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                // dA = G B^T, dB = A^T G
                for r in 0..m {
                    for c in 0..k {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += g[r * n + j] * bv.at(c, j);
                        }
                        grads[a.0][r * k + c] += acc;
                    }
                }
                for r in 0..k {
                    for c in 0..n {
                        let mut acc = 0.0;
                        for j in 0..m {
                            acc += av.at(j, r) * g[j * n + c];
                        }
                        grads[b.0][r * n + c] += acc;
                    }
                }
            }
            Op::AddBroadcast(m, v) => {
                let mv = self.value(*m);
                let (rows, cols) = (mv.rows(), mv.cols());
                for (gm, &gi) in grads[m.0].iter_mut().zip(g) {
                    *gm += gi;
                }
                for r in 0..rows {
                    let mut acc = 0.0;
                    for c in 0..cols {
                        acc += g[r * cols + c];
                    }
                    grads[v.0][r] += acc;
                }
            }
            Op::Elementwise(op, a, b) => match op {
                ElementwiseOp::Add => {
                    for (ga, &gi) in grads[a.0].iter_mut().zip(g) {
                        *ga += gi;
                    }
                    for (gb, &gi) in grads[b.0].iter_mut().zip(g) {
                        *gb += gi;
                    }
                }
                ElementwiseOp::Sub => {
                    for (ga, &gi) in grads[a.0].iter_mut().zip(g) {
                        *ga += gi;
                    }
                    for (gb, &gi) in grads[b.0].iter_mut().zip(g) {
                        *gb -= gi;
                    }
                }
                ElementwiseOp::Mul => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    for (k, &gi) in g.iter().enumerate() {
                        grads[a.0][k] += gi * bv.data()[k];
                        grads[b.0][k] += gi * av.data()[k];
                    }
                }
            },
            Op::Activation(kind, a) => {
                let (inp, out) = (self.value(*a), &self.nodes[i].value);
                for (k, &gi) in g.iter().enumerate() {
                    let d = match kind {
                        Activation::Sigmoid => {
                            let s = out.data()[k];
                            s * (1.0 - s)
                        }
                        Activation::Tanh => {
                            let t = out.data()[k];
                            1.0 - t * t
                        }
                        // Subgradient 0 at exactly 0.
                        Activation::Relu => {
                            if inp.data()[k] > 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                    };
                    grads[a.0][k] += gi * d;
                }
            }
            Op::SoftmaxColumns(a) => {
                let out = &self.nodes[i].value;
                let (rows, cols) = (out.rows(), out.cols());
                for j in 0..cols {
                    let mut weighted = 0.0;
                    for r in 0..rows {
                        weighted += g[r * cols + j] * out.at(r, j);
                    }
                    for r in 0..rows {
                        let s = out.at(r, j);
                        grads[a.0][r * cols + j] += s * (g[r * cols + j] - weighted);
                    }
                }
            }
            Op::Transpose(a) => {
                let av = self.value(*a);
                let (rows, cols) = (av.rows(), av.cols());
                for r in 0..rows {
                    for c in 0..cols {
                        grads[a.0][r * cols + c] += g[c * rows + r];
                    }
                }
            }
            Op::ConcatRows(a, b) => {
                let split = self.value(*a).numel();
                for (k, &gi) in g.iter().enumerate() {
                    if k < split {
                        grads[a.0][k] += gi;
                    } else {
                        grads[b.0][k - split] += gi;
                    }
                }
            }
            Op::StackColumns(parts) => {
                let cols = parts.len();
                let rows = self.nodes[i].value.rows();
                for (j, p) in parts.iter().enumerate() {
                    for r in 0..rows {
                        grads[p.0][r] += g[r * cols + j];
                    }
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).numel();
                    for k in 0..len {
                        grads[p.0][k] += g[offset + k];
                    }
                    offset += len;
                }
            }
            Op::Reshape(a) => {
                for (ga, &gi) in grads[a.0].iter_mut().zip(g) {
                    *ga += gi;
                }
            }
            Op::Sum(a) => {
                for ga in grads[a.0].iter_mut() {
                    *ga += g[0];
                }
            }
            Op::Scale(a, factor) => {
                for (ga, &gi) in grads[a.0].iter_mut().zip(g) {
                    *ga += gi * factor;
                }
            }
            Op::ConvMaxPool {
                input,
                filters,
                bias,
                window,
                argmax,
            } => {
                let (iv, fv) = (self.value(*input), self.value(*filters));
                let out = &self.nodes[i].value;
                let (c_in, real_cols) = (iv.rows(), iv.cols());
                for (fi, &gi) in g.iter().enumerate() {
                    if gi == 0.0 {
                        continue;
                    }
                    // The pooled value is relu(pre); it is positive iff
                    // pre > 0, so a zero output means a dead unit.
                    if out.data()[fi] <= 0.0 {
                        continue;
                    }
                    let p = argmax[fi];
                    grads[bias.0][fi] += gi;
                    for o in 0..*window {
                        let col = p + o;
                        if col >= real_cols {
                            continue; // gradient into the zero pad is dropped
                        }
                        for q in 0..c_in {
                            grads[filters.0][fi * (window * c_in) + o * c_in + q] +=
                                gi * iv.at(q, col);
                            grads[input.0][q * real_cols + col] += gi * fv.at(fi, o * c_in + q);
                        }
                    }
                }
            }
            Op::NtnBilinear {
                weight,
                left,
                right,
            } => {
                let (wv, lv, rv) = (self.value(*weight), self.value(*left), self.value(*right));
                let (p_dim, q_dim) = (wv.shape()[1], wv.shape()[2]);
                let (slices, cols) = (wv.shape()[0], lv.cols());
                for s in 0..slices {
                    for j in 0..cols {
                        let gi = g[s * cols + j];
                        if gi == 0.0 {
                            continue;
                        }
                        for p in 0..p_dim {
                            let a = lv.at(p, j);
                            let mut left_acc = 0.0;
                            for q in 0..q_dim {
                                let w = wv.data()[s * p_dim * q_dim + p * q_dim + q];
                                let h = rv.at(q, j);
                                grads[weight.0][s * p_dim * q_dim + p * q_dim + q] += gi * a * h;
                                grads[right.0][q * cols + j] += gi * w * a;
                                left_acc += w * h;
                            }
                            grads[left.0][p * cols + j] += gi * left_acc;
                        }
                    }
                }
            }
            Op::EucCos { left, right } => {
                let (lv, rv) = (self.value(*left), self.value(*right));
                let out = &self.nodes[i].value;
                let (rows, cols) = (lv.rows(), lv.cols());
                for j in 0..cols {
                    let g_dist = g[j];
                    let g_cos = g[cols + j];
                    let dist = out.at(0, j);
                    if g_dist != 0.0 && dist > COS_EPS {
                        for r in 0..rows {
                            let d = (lv.at(r, j) - rv.at(r, j)) / dist;
                            grads[left.0][r * cols + j] += g_dist * d;
                            grads[right.0][r * cols + j] -= g_dist * d;
                        }
                    }
                    if g_cos != 0.0 {
                        let mut nl = 0.0;
                        let mut nr = 0.0;
                        for r in 0..rows {
                            nl += lv.at(r, j) * lv.at(r, j);
                            nr += rv.at(r, j) * rv.at(r, j);
                        }
                        let (nl, nr) = (nl.sqrt(), nr.sqrt());
                        if nl >= COS_EPS && nr >= COS_EPS {
                            let cos = out.at(1, j);
                            for r in 0..rows {
                                let a = lv.at(r, j);
                                let h = rv.at(r, j);
                                grads[left.0][r * cols + j] +=
                                    g_cos * (h / (nl * nr) - cos * a / (nl * nl));
                                grads[right.0][r * cols + j] +=
                                    g_cos * (a / (nl * nr) - cos * h / (nr * nr));
                            }
                        }
                    }
                }
            }
            Op::NegLogPicked { probs, indices } => {
                let pv = self.value(*probs);
                let total: f64 = indices.iter().map(|&k| pv.data()[k]).sum();
                let d = -1.0 / (total + LOG_FLOOR);
                for &k in indices {
                    grads[probs.0][k] += g[0] * d;
                }
            }
        }
    }
}

const COS_EPS: f64 = 1e-12;
const LOG_FLOOR: f64 = 1e-12;

/// Overflow-free logistic function.
fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn matmul_value(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = Tensor::zeros(&[m, n]);
    for r in 0..m {
        for c in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a.at(r, p) * b.at(p, c);
            }
            out.set(r, c, acc);
        }
    }
    out
}

fn transpose_value(a: &Tensor) -> Tensor {
    let (rows, cols) = (a.rows(), a.cols());
    let mut out = Tensor::zeros(&[cols, rows]);
    for r in 0..rows {
        for c in 0..cols {
            out.set(c, r, a.at(r, c));
        }
    }
    out
}

fn softmax_columns_value(a: &Tensor) -> Tensor {
    let (rows, cols) = (a.rows(), a.cols());
    let mut out = a.clone();
    for j in 0..cols {
        let mut max = f64::NEG_INFINITY;
        for r in 0..rows {
            max = max.max(a.at(r, j));
        }
        let mut total = 0.0;
        for r in 0..rows {
            let e = (a.at(r, j) - max).exp();
            out.set(r, j, e);
            total += e;
        }
        for r in 0..rows {
            let e = out.at(r, j);
            out.set(r, j, e / total);
        }
    }
    out
}
