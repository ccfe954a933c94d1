//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation in creation order; since an operation
//! can only consume already-existing values, creation order is a topological
//! order and [`Tape::backward`] replays it once in reverse. Each node carries
//! its value and a same-shape gradient accumulator. Nodes never reached by
//! the root's gradient are skipped, so detached subgraphs cost nothing on the
//! backward pass.
//!
//! The op set is exactly what the model needs: matrix products and affine
//! maps, length-preserving 1-D convolution (kernel 3, stride 1, zero pad 1),
//! pooling, LeakyReLU / sigmoid / softplus, adaptive instance normalization,
//! incidence-driven grouped row means, row gather/stack for candidate
//! scoring, cosine similarity, and the bowl-shaped similarity penalty used to
//! regularize generated negatives.
//!
//! Single-threaded by design: values are plain indices into one tape and are
//! never shared across threads.

pub mod gradcheck;

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::matrix::{self, Matrix};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Value(usize);

/// Shared row-group structure for grouped mean aggregation
/// (hyperedge membership lists, per-node incident-edge lists).
pub type RowGroups = Rc<Vec<Vec<usize>>>;

#[derive(Clone)]
enum Op {
    Leaf,
    Matmul { a: Value, b: Value },
    Add { a: Value, b: Value },
    Sub { a: Value, b: Value },
    Mul { a: Value, b: Value },
    Scale { a: Value, factor: f64 },
    AddRowBroadcast { a: Value, bias: Value },
    RowScale { a: Value, weights: Value },
    LeakyRelu { a: Value, slope: f64 },
    Sigmoid { a: Value },
    Softplus { a: Value },
    Conv1d { x: Value, kernels: Value, bias: Value },
    AvgPool1d { x: Value, window: usize },
    AdaIn { x: Value, scale: Value, shift: Value, eps: f64 },
    Upsample2 { x: Value },
    Reshape { a: Value },
    ConcatCols { a: Value, b: Value },
    ConcatRows { parts: Vec<Value> },
    GatherRows { a: Value, indices: Vec<usize> },
    ColMax { a: Value, argrows: Vec<usize> },
    ColMin { a: Value, argrows: Vec<usize> },
    SumAll { a: Value },
    MeanAll { a: Value },
    CosineSimilarity { a: Value, b: Value, eps: f64 },
    SimilarityPenalty { theta: Value, target: f64, curvature: f64, eps: f64 },
    GroupMeanRows { a: Value, groups: RowGroups },
}

struct Node {
    data: Matrix,
    grad: Matrix,
    touched: bool,
    op: Op,
}

/// Wengert tape: forward ops append nodes, `backward` fills gradients.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

#[inline]
pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn stable_softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Bowl-shaped penalty on a similarity value: zero at `target`, diverging at
/// the clamp boundaries near 0 and 1. Shared by the tape op and shape tests.
pub fn similarity_penalty_value(theta: f64, target: f64, curvature: f64, eps: f64) -> f64 {
    let t = theta.clamp(eps, 1.0 - eps);
    let u = (t - target).abs();
    (u / (t * (1.0 - t))).powf(curvature)
}

fn similarity_penalty_dtheta(theta: f64, target: f64, curvature: f64, eps: f64) -> f64 {
    if theta <= eps || theta >= 1.0 - eps {
        return 0.0;
    }
    let t = theta;
    let u = t - target;
    let g = t * (1.0 - t);
    let r = u.abs() / g;
    // sign(0) = 0: the kink at theta == target gets the zero subgradient.
    let sign = if u > 0.0 {
        1.0
    } else if u < 0.0 {
        -1.0
    } else {
        0.0
    };
    curvature * r.powf(curvature - 1.0) * (sign * g - u.abs() * (1.0 - 2.0 * t)) / (g * g)
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

    fn push(&mut self, data: Matrix, op: Op) -> Value {
        let grad = Matrix::zeros(data.rows(), data.cols());
        self.nodes.push(Node { data, grad, touched: false, op });
        Value(self.nodes.len() - 1)
    }

    /// Record an input or parameter node.
    pub fn leaf(&mut self, data: Matrix) -> Value {
        self.push(data, Op::Leaf)
    }

    /// 1×1 constant.
    pub fn scalar(&mut self, x: f64) -> Value {
        self.leaf(Matrix::from_vec(1, 1, vec![x]))
    }

    pub fn data(&self, v: Value) -> &Matrix {
        &self.nodes[v.0].data
    }

    pub fn grad(&self, v: Value) -> &Matrix {
        &self.nodes[v.0].grad
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar_value(&self, v: Value) -> f64 {
        debug_assert_eq!(self.nodes[v.0].data.numel(), 1);
        self.nodes[v.0].data.as_slice()[0]
    }

    // ── Forward ops ─────────────────────────────────────────────────

    pub fn matmul(&mut self, a: Value, b: Value) -> Result<Value> {
        let (am, ak) = self.data(a).shape();
        let (bk, bn) = self.data(b).shape();
        if ak != bk {
            return Err(Error::Shape(format!(
                "matmul inner dimensions disagree: left {am}x{ak}, right {bk}x{bn}"
            )));
        }
        let out = matrix::matmul(self.data(a), self.data(b));
        Ok(self.push(out, Op::Matmul { a, b }))
    }

    pub fn add(&mut self, a: Value, b: Value) -> Result<Value> {
        self.elementwise_pair(a, b, "add", |x, y| x + y, |a, b| Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Value, b: Value) -> Result<Value> {
        self.elementwise_pair(a, b, "sub", |x, y| x - y, |a, b| Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Value, b: Value) -> Result<Value> {
        self.elementwise_pair(a, b, "mul", |x, y| x * y, |a, b| Op::Mul { a, b })
    }

    fn elementwise_pair(
        &mut self,
        a: Value,
        b: Value,
        name: &str,
        f: impl Fn(f64, f64) -> f64,
        op: impl Fn(Value, Value) -> Op,
    ) -> Result<Value> {
        if self.data(a).shape() != self.data(b).shape() {
            let (am, an) = self.data(a).shape();
            let (bm, bn) = self.data(b).shape();
            return Err(Error::Shape(format!(
                "{name} requires equal shapes: left {am}x{an}, right {bm}x{bn}"
            )));
        }
        let out = Matrix::from_vec(
            self.data(a).rows(),
            self.data(a).cols(),
            self.data(a)
                .as_slice()
                .iter()
                .zip(self.data(b).as_slice())
                .map(|(&x, &y)| f(x, y))
                .collect(),
        );
        Ok(self.push(out, op(a, b)))
    }

    pub fn scale(&mut self, a: Value, factor: f64) -> Value {
        let out = self.data(a).map(|x| x * factor);
        self.push(out, Op::Scale { a, factor })
    }

    /// Add a 1×n bias row to every row of an m×n matrix.
    pub fn add_row_broadcast(&mut self, a: Value, bias: Value) -> Result<Value> {
        let (m, n) = self.data(a).shape();
        if self.data(bias).numel() != n {
            return Err(Error::Shape(format!(
                "bias length {} does not match row width {n}",
                self.data(bias).numel()
            )));
        }
        let mut out = self.data(a).clone();
        let b = self.data(bias).as_slice().to_vec();
        for i in 0..m {
            for (o, bj) in out.row_mut(i).iter_mut().zip(&b) {
                *o += bj;
            }
        }
        Ok(self.push(out, Op::AddRowBroadcast { a, bias }))
    }

    /// Scale row i of an m×n matrix by weights[i] (weights m×1).
    pub fn row_scale(&mut self, a: Value, weights: Value) -> Result<Value> {
        let (m, _n) = self.data(a).shape();
        if self.data(weights).numel() != m {
            return Err(Error::Shape(format!(
                "row weights length {} does not match row count {m}",
                self.data(weights).numel()
            )));
        }
        let w = self.data(weights).as_slice().to_vec();
        let mut out = self.data(a).clone();
        for i in 0..m {
            for o in out.row_mut(i) {
                *o *= w[i];
            }
        }
        Ok(self.push(out, Op::RowScale { a, weights }))
    }

    /// Elementwise x if x >= 0 else slope*x. The kink at exactly 0 takes the
    /// negative-side slope in backward.
    pub fn leaky_relu(&mut self, a: Value, slope: f64) -> Value {
        let out = self.data(a).map(|x| if x >= 0.0 { x } else { slope * x });
        self.push(out, Op::LeakyRelu { a, slope })
    }

    pub fn sigmoid(&mut self, a: Value) -> Value {
        let out = self.data(a).map(stable_sigmoid);
        self.push(out, Op::Sigmoid { a })
    }

    pub fn softplus(&mut self, a: Value) -> Value {
        let out = self.data(a).map(stable_softplus);
        self.push(out, Op::Softplus { a })
    }

    /// Length-preserving 1-D cross-correlation: x is c_in×L, kernels is
    /// c_out×(c_in·3) laid out [out][in][tap], bias has c_out entries.
    /// Kernel width 3, stride 1, zero padding 1.
    pub fn conv1d(&mut self, x: Value, kernels: Value, bias: Value) -> Result<Value> {
        let (c_in, len) = self.data(x).shape();
        let (c_out, kc) = self.data(kernels).shape();
        if len < 1 {
            return Err(Error::Shape("conv1d input length must be >= 1".into()));
        }
        if kc != c_in * 3 {
            return Err(Error::Shape(format!(
                "conv1d kernels are {c_out}x{kc}, expected {c_out}x{} for {c_in} input channels",
                c_in * 3
            )));
        }
        if self.data(bias).numel() != c_out {
            return Err(Error::Shape(format!(
                "conv1d bias length {} does not match {c_out} output channels",
                self.data(bias).numel()
            )));
        }
        let xd = self.data(x);
        let kd = self.data(kernels);
        let bd = self.data(bias).as_slice();
        let mut out = Matrix::zeros(c_out, len);
        for o in 0..c_out {
            let krow = kd.row(o);
            for pos in 0..len {
                let mut acc = bd[o];
                for ci in 0..c_in {
                    let xrow = xd.row(ci);
                    for tap in 0..3usize {
                        let idx = pos + tap;
                        // padded index = pos + tap - 1
                        if idx >= 1 && idx <= len {
                            acc += krow[ci * 3 + tap] * xrow[idx - 1];
                        }
                    }
                }
                out.set(o, pos, acc);
            }
        }
        Ok(self.push(out, Op::Conv1d { x, kernels, bias }))
    }

    /// Non-overlapping mean pooling along length; a final partial window is
    /// averaged over its actual size.
    pub fn avgpool1d(&mut self, x: Value, window: usize) -> Result<Value> {
        if window == 0 {
            return Err(Error::Parameter("avgpool1d window must be >= 1".into()));
        }
        let (c, len) = self.data(x).shape();
        let out_len = len.div_ceil(window);
        let mut out = Matrix::zeros(c, out_len);
        for ch in 0..c {
            let row = self.data(x).row(ch).to_vec();
            for w in 0..out_len {
                let start = w * window;
                let end = (start + window).min(len);
                let sum: f64 = row[start..end].iter().sum();
                out.set(ch, w, sum / (end - start) as f64);
            }
        }
        Ok(self.push(out, Op::AvgPool1d { x, window }))
    }

    /// Adaptive instance normalization: per channel over length,
    /// y = scale_c · (x − μ_c)/sqrt(var_c + eps) + shift_c.
    pub fn adain(&mut self, x: Value, scale: Value, shift: Value, eps: f64) -> Result<Value> {
        if eps <= 0.0 {
            return Err(Error::Parameter(format!("adain eps must be > 0, got {eps}")));
        }
        let (c, len) = self.data(x).shape();
        if self.data(scale).numel() != c || self.data(shift).numel() != c {
            return Err(Error::Shape(format!(
                "adain style lengths ({}, {}) do not match {c} channels",
                self.data(scale).numel(),
                self.data(shift).numel()
            )));
        }
        let sd = self.data(scale).as_slice().to_vec();
        let td = self.data(shift).as_slice().to_vec();
        let mut out = Matrix::zeros(c, len);
        for ch in 0..c {
            let row = self.data(x).row(ch);
            let (mu, var) = channel_stats(row);
            let inv = 1.0 / (var + eps).sqrt();
            for l in 0..len {
                out.set(ch, l, sd[ch] * (row[l] - mu) * inv + td[ch]);
            }
        }
        Ok(self.push(out, Op::AdaIn { x, scale, shift, eps }))
    }

    /// Nearest-neighbor ×2 upsampling along length.
    pub fn upsample2(&mut self, x: Value) -> Value {
        let (c, len) = self.data(x).shape();
        let mut out = Matrix::zeros(c, len * 2);
        for ch in 0..c {
            for l in 0..len {
                let v = self.data(x).get(ch, l);
                out.set(ch, 2 * l, v);
                out.set(ch, 2 * l + 1, v);
            }
        }
        self.push(out, Op::Upsample2 { x })
    }

    /// Reinterpret the row-major buffer under a new shape.
    pub fn reshape(&mut self, a: Value, rows: usize, cols: usize) -> Result<Value> {
        if rows * cols != self.data(a).numel() {
            return Err(Error::Shape(format!(
                "reshape to {rows}x{cols} changes element count from {}",
                self.data(a).numel()
            )));
        }
        let out = self.data(a).reshaped(rows, cols);
        Ok(self.push(out, Op::Reshape { a }))
    }

    pub fn concat_cols(&mut self, a: Value, b: Value) -> Result<Value> {
        let (am, an) = self.data(a).shape();
        let (bm, bn) = self.data(b).shape();
        if am != bm {
            return Err(Error::Shape(format!(
                "concat_cols row counts disagree: {am}x{an} vs {bm}x{bn}"
            )));
        }
        let mut out = Matrix::zeros(am, an + bn);
        for i in 0..am {
            out.row_mut(i)[..an].copy_from_slice(self.data(a).row(i));
        }
        for i in 0..am {
            out.row_mut(i)[an..].copy_from_slice(self.data(b).row(i));
        }
        Ok(self.push(out, Op::ConcatCols { a, b }))
    }

    /// Stack matrices with equal column counts on top of each other.
    pub fn concat_rows(&mut self, parts: &[Value]) -> Result<Value> {
        if parts.is_empty() {
            return Err(Error::Parameter("concat_rows needs at least one part".into()));
        }
        let cols = self.data(parts[0]).cols();
        let mut rows = 0;
        for &p in parts {
            if self.data(p).cols() != cols {
                return Err(Error::Shape(format!(
                    "concat_rows column counts disagree: {} vs {cols}",
                    self.data(p).cols()
                )));
            }
            rows += self.data(p).rows();
        }
        let mut out = Matrix::zeros(rows, cols);
        let mut at = 0;
        for &p in parts {
            for i in 0..self.data(p).rows() {
                out.row_mut(at).copy_from_slice(self.data(p).row(i));
                at += 1;
            }
        }
        Ok(self.push(out, Op::ConcatRows { parts: parts.to_vec() }))
    }

    /// Select rows by index (duplicates allowed); backward scatter-adds.
    pub fn gather_rows(&mut self, a: Value, indices: &[usize]) -> Result<Value> {
        if indices.is_empty() {
            return Err(Error::Parameter("gather_rows needs at least one index".into()));
        }
        let (m, n) = self.data(a).shape();
        if let Some(&bad) = indices.iter().find(|&&i| i >= m) {
            return Err(Error::Parameter(format!(
                "gather_rows index {bad} out of range for {m} rows"
            )));
        }
        let mut out = Matrix::zeros(indices.len(), n);
        for (r, &i) in indices.iter().enumerate() {
            out.row_mut(r).copy_from_slice(self.data(a).row(i));
        }
        Ok(self.push(out, Op::GatherRows { a, indices: indices.to_vec() }))
    }

    /// Columnwise max over rows → 1×n. Ties route gradient to the first
    /// attaining row.
    pub fn col_max(&mut self, a: Value) -> Result<Value> {
        self.col_extremum(a, true)
    }

    /// Columnwise min over rows → 1×n. Ties route gradient to the first
    /// attaining row.
    pub fn col_min(&mut self, a: Value) -> Result<Value> {
        self.col_extremum(a, false)
    }

    fn col_extremum(&mut self, a: Value, is_max: bool) -> Result<Value> {
        let (m, n) = self.data(a).shape();
        if m == 0 {
            return Err(Error::Shape("column extremum of an empty matrix".into()));
        }
        let mut out = Matrix::zeros(1, n);
        let mut argrows = vec![0usize; n];
        for j in 0..n {
            let mut best = self.data(a).get(0, j);
            let mut arg = 0;
            for i in 1..m {
                let v = self.data(a).get(i, j);
                if (is_max && v > best) || (!is_max && v < best) {
                    best = v;
                    arg = i;
                }
            }
            out.set(0, j, best);
            argrows[j] = arg;
        }
        let op = if is_max { Op::ColMax { a, argrows } } else { Op::ColMin { a, argrows } };
        Ok(self.push(out, op))
    }

    pub fn sum_all(&mut self, a: Value) -> Result<Value> {
        if self.data(a).numel() == 0 {
            return Err(Error::Shape("sum of an empty matrix".into()));
        }
        let s: f64 = self.data(a).as_slice().iter().sum();
        Ok(self.push(Matrix::from_vec(1, 1, vec![s]), Op::SumAll { a }))
    }

    pub fn mean_all(&mut self, a: Value) -> Result<Value> {
        if self.data(a).numel() == 0 {
            return Err(Error::Shape("mean of an empty matrix".into()));
        }
        let s: f64 = self.data(a).as_slice().iter().sum();
        let mean = s / self.data(a).numel() as f64;
        Ok(self.push(Matrix::from_vec(1, 1, vec![mean]), Op::MeanAll { a }))
    }

    /// Cosine similarity of two equally-sized values treated as flat vectors:
    /// a·b / (max(‖a‖, eps) · max(‖b‖, eps)).
    pub fn cosine_similarity(&mut self, a: Value, b: Value, eps: f64) -> Result<Value> {
        if eps <= 0.0 {
            return Err(Error::Parameter(format!("cosine eps must be > 0, got {eps}")));
        }
        if self.data(a).numel() != self.data(b).numel() {
            return Err(Error::Shape(format!(
                "cosine similarity lengths disagree: {} vs {}",
                self.data(a).numel(),
                self.data(b).numel()
            )));
        }
        let av = self.data(a).as_slice();
        let bv = self.data(b).as_slice();
        let dot: f64 = av.iter().zip(bv).map(|(x, y)| x * y).sum();
        let na = av.iter().map(|x| x * x).sum::<f64>().sqrt().max(eps);
        let nb = bv.iter().map(|x| x * x).sum::<f64>().sqrt().max(eps);
        let s = dot / (na * nb);
        Ok(self.push(Matrix::from_vec(1, 1, vec![s]), Op::CosineSimilarity { a, b, eps }))
    }

    /// Elementwise bowl penalty: zero at `target`, growing toward the clamp
    /// boundaries at eps and 1−eps. `target` must lie in (0,1), `curvature`
    /// must be >= 1.
    pub fn similarity_penalty(
        &mut self,
        theta: Value,
        target: f64,
        curvature: f64,
        eps: f64,
    ) -> Result<Value> {
        if !(0.0 < target && target < 1.0) {
            return Err(Error::Parameter(format!(
                "penalty target must lie in (0,1), got {target}"
            )));
        }
        if curvature < 1.0 {
            return Err(Error::Parameter(format!("penalty curvature must be >= 1, got {curvature}")));
        }
        if !(0.0 < eps && eps < 0.5) {
            return Err(Error::Parameter(format!("penalty eps must lie in (0,0.5), got {eps}")));
        }
        let out = self.data(theta).map(|t| similarity_penalty_value(t, target, curvature, eps));
        Ok(self.push(out, Op::SimilarityPenalty { theta, target, curvature, eps }))
    }

    /// Row g of the output is the mean of the input rows listed in groups[g];
    /// an empty group yields a zero row.
    pub fn group_mean_rows(&mut self, a: Value, groups: RowGroups) -> Result<Value> {
        let (m, n) = self.data(a).shape();
        for (g, members) in groups.iter().enumerate() {
            if let Some(&bad) = members.iter().find(|&&i| i >= m) {
                return Err(Error::Parameter(format!(
                    "group {g} references row {bad}, input has {m} rows"
                )));
            }
        }
        let mut out = Matrix::zeros(groups.len(), n);
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let inv = 1.0 / members.len() as f64;
            for &i in members {
                let src = self.data(a).row(i).to_vec();
                for (o, s) in out.row_mut(g).iter_mut().zip(&src) {
                    *o += s * inv;
                }
            }
        }
        Ok(self.push(out, Op::GroupMeanRows { a, groups }))
    }

    /// Cut the graph: same data, no parents, no gradient flow upstream.
    pub fn detach(&mut self, a: Value) -> Value {
        let data = self.data(a).clone();
        self.leaf(data)
    }

    /// x·W + bias for a row-batch x (affine layer shorthand).
    pub fn affine(&mut self, x: Value, weight: Value, bias: Value) -> Result<Value> {
        let prod = self.matmul(x, weight)?;
        self.add_row_broadcast(prod, bias)
    }

    // ── Backward ────────────────────────────────────────────────────

    /// Reverse sweep from a scalar root; fills `grad` on every reachable
    /// node with d(root)/d(node).
    pub fn backward(&mut self, root: Value) -> Result<()> {
        if self.data(root).numel() != 1 {
            let (m, n) = self.data(root).shape();
            return Err(Error::Shape(format!(
                "backward root must be a 1x1 scalar, got {m}x{n}"
            )));
        }
        for node in &mut self.nodes {
            node.grad = Matrix::zeros(node.data.rows(), node.data.cols());
            node.touched = false;
        }
        self.nodes[root.0].grad.set(0, 0, 1.0);
        self.nodes[root.0].touched = true;

        for idx in (0..self.nodes.len()).rev() {
            if !self.nodes[idx].touched {
                continue;
            }
            let op = self.nodes[idx].op.clone();
            let d_out = self.nodes[idx].grad.clone();
            self.backward_op(&op, Value(idx), &d_out);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Value, delta: &Matrix) {
        let node = &mut self.nodes[v.0];
        debug_assert_eq!(node.grad.shape(), delta.shape());
        for (g, d) in node.grad.as_mut_slice().iter_mut().zip(delta.as_slice()) {
            *g += d;
        }
        node.touched = true;
    }

    fn backward_op(&mut self, op: &Op, out: Value, d_out: &Matrix) {
        match op {
            Op::Leaf => {}

            Op::Matmul { a, b } => {
                let da = matrix::matmul_nt(d_out, self.data(*b));
                let db = matrix::matmul_tn(self.data(*a), d_out);
                self.accumulate(*a, &da);
                self.accumulate(*b, &db);
            }

            Op::Add { a, b } => {
                self.accumulate(*a, d_out);
                self.accumulate(*b, d_out);
            }

            Op::Sub { a, b } => {
                self.accumulate(*a, d_out);
                let neg = d_out.map(|x| -x);
                self.accumulate(*b, &neg);
            }

            Op::Mul { a, b } => {
                let da = Matrix::from_vec(
                    d_out.rows(),
                    d_out.cols(),
                    d_out
                        .as_slice()
                        .iter()
                        .zip(self.data(*b).as_slice())
                        .map(|(d, y)| d * y)
                        .collect(),
                );
                let db = Matrix::from_vec(
                    d_out.rows(),
                    d_out.cols(),
                    d_out
                        .as_slice()
                        .iter()
                        .zip(self.data(*a).as_slice())
                        .map(|(d, x)| d * x)
                        .collect(),
                );
                self.accumulate(*a, &da);
                self.accumulate(*b, &db);
            }

            Op::Scale { a, factor } => {
                let da = d_out.map(|x| x * factor);
                self.accumulate(*a, &da);
            }

            Op::AddRowBroadcast { a, bias } => {
                self.accumulate(*a, d_out);
                let (m, n) = d_out.shape();
                let mut db = vec![0.0; n];
                for i in 0..m {
                    for (acc, d) in db.iter_mut().zip(d_out.row(i)) {
                        *acc += d;
                    }
                }
                let shape = self.data(*bias).shape();
                self.accumulate(*bias, &Matrix::from_vec(shape.0, shape.1, db));
            }

            Op::RowScale { a, weights } => {
                let (m, n) = d_out.shape();
                let w = self.data(*weights).as_slice().to_vec();
                let mut da = Matrix::zeros(m, n);
                let mut dw = vec![0.0; m];
                for i in 0..m {
                    let arow = self.data(*a).row(i).to_vec();
                    let drow = d_out.row(i);
                    for j in 0..n {
                        da.set(i, j, drow[j] * w[i]);
                        dw[i] += drow[j] * arow[j];
                    }
                }
                let shape = self.data(*weights).shape();
                self.accumulate(*a, &da);
                self.accumulate(*weights, &Matrix::from_vec(shape.0, shape.1, dw));
            }

            Op::LeakyRelu { a, slope } => {
                let da = Matrix::from_vec(
                    d_out.rows(),
                    d_out.cols(),
                    d_out
                        .as_slice()
                        .iter()
                        .zip(self.data(*a).as_slice())
                        .map(|(d, &x)| if x > 0.0 { *d } else { d * slope })
                        .collect(),
                );
                self.accumulate(*a, &da);
            }

            Op::Sigmoid { a } => {
                let da = Matrix::from_vec(
                    d_out.rows(),
                    d_out.cols(),
                    d_out
                        .as_slice()
                        .iter()
                        .zip(self.data(out).as_slice())
                        .map(|(d, &y)| d * y * (1.0 - y))
                        .collect(),
                );
                self.accumulate(*a, &da);
            }

            Op::Softplus { a } => {
                let da = Matrix::from_vec(
                    d_out.rows(),
                    d_out.cols(),
                    d_out
                        .as_slice()
                        .iter()
                        .zip(self.data(*a).as_slice())
                        .map(|(d, &x)| d * stable_sigmoid(x))
                        .collect(),
                );
                self.accumulate(*a, &da);
            }

            Op::Conv1d { x, kernels, bias } => {
                let (c_in, len) = self.data(*x).shape();
                let (c_out, _) = self.data(*kernels).shape();
                let mut dx = Matrix::zeros(c_in, len);
                let mut dk = Matrix::zeros(c_out, c_in * 3);
                let mut db = vec![0.0; c_out];
                for o in 0..c_out {
                    let krow = self.data(*kernels).row(o).to_vec();
                    for pos in 0..len {
                        let d = d_out.get(o, pos);
                        if d == 0.0 {
                            continue;
                        }
                        db[o] += d;
                        for ci in 0..c_in {
                            for tap in 0..3usize {
                                let idx = pos + tap;
                                if idx >= 1 && idx <= len {
                                    let xv = self.data(*x).get(ci, idx - 1);
                                    dx.set(ci, idx - 1, dx.get(ci, idx - 1) + d * krow[ci * 3 + tap]);
                                    dk.set(o, ci * 3 + tap, dk.get(o, ci * 3 + tap) + d * xv);
                                }
                            }
                        }
                    }
                }
                let bshape = self.data(*bias).shape();
                self.accumulate(*x, &dx);
                self.accumulate(*kernels, &dk);
                self.accumulate(*bias, &Matrix::from_vec(bshape.0, bshape.1, db));
            }

            Op::AvgPool1d { x, window } => {
                let (c, len) = self.data(*x).shape();
                let mut dx = Matrix::zeros(c, len);
                let out_len = len.div_ceil(*window);
                for ch in 0..c {
                    for w in 0..out_len {
                        let start = w * window;
                        let end = (start + window).min(len);
                        let share = d_out.get(ch, w) / (end - start) as f64;
                        for l in start..end {
                            dx.set(ch, l, dx.get(ch, l) + share);
                        }
                    }
                }
                self.accumulate(*x, &dx);
            }

            Op::AdaIn { x, scale, shift, eps } => {
                let (c, len) = self.data(*x).shape();
                let sd = self.data(*scale).as_slice().to_vec();
                let mut dx = Matrix::zeros(c, len);
                let mut dscale = vec![0.0; c];
                let mut dshift = vec![0.0; c];
                for ch in 0..c {
                    let row = self.data(*x).row(ch).to_vec();
                    let (mu, var) = channel_stats(&row);
                    let inv = 1.0 / (var + eps).sqrt();
                    let xhat: Vec<f64> = row.iter().map(|&v| (v - mu) * inv).collect();
                    let dy = d_out.row(ch);
                    let mut dxhat_mean = 0.0;
                    let mut dxhat_xhat_mean = 0.0;
                    for l in 0..len {
                        let dxh = dy[l] * sd[ch];
                        dscale[ch] += dy[l] * xhat[l];
                        dshift[ch] += dy[l];
                        dxhat_mean += dxh;
                        dxhat_xhat_mean += dxh * xhat[l];
                    }
                    dxhat_mean /= len as f64;
                    dxhat_xhat_mean /= len as f64;
                    for l in 0..len {
                        let dxh = dy[l] * sd[ch];
                        dx.set(ch, l, inv * (dxh - dxhat_mean - xhat[l] * dxhat_xhat_mean));
                    }
                }
                let sshape = self.data(*scale).shape();
                let tshape = self.data(*shift).shape();
                self.accumulate(*x, &dx);
                self.accumulate(*scale, &Matrix::from_vec(sshape.0, sshape.1, dscale));
                self.accumulate(*shift, &Matrix::from_vec(tshape.0, tshape.1, dshift));
            }

            Op::Upsample2 { x } => {
                let (c, len) = self.data(*x).shape();
                let mut dx = Matrix::zeros(c, len);
                for ch in 0..c {
                    for l in 0..len {
                        dx.set(ch, l, d_out.get(ch, 2 * l) + d_out.get(ch, 2 * l + 1));
                    }
                }
                self.accumulate(*x, &dx);
            }

            Op::Reshape { a } => {
                let (m, n) = self.data(*a).shape();
                self.accumulate(*a, &d_out.reshaped(m, n));
            }

            Op::ConcatCols { a, b } => {
                let (m, an) = self.data(*a).shape();
                let bn = self.data(*b).cols();
                let mut da = Matrix::zeros(m, an);
                let mut db = Matrix::zeros(m, bn);
                for i in 0..m {
                    da.row_mut(i).copy_from_slice(&d_out.row(i)[..an]);
                    db.row_mut(i).copy_from_slice(&d_out.row(i)[an..]);
                }
                self.accumulate(*a, &da);
                self.accumulate(*b, &db);
            }

            Op::ConcatRows { parts } => {
                let mut at = 0;
                for &p in parts {
                    let (m, n) = self.data(p).shape();
                    let mut dp = Matrix::zeros(m, n);
                    for i in 0..m {
                        dp.row_mut(i).copy_from_slice(d_out.row(at + i));
                    }
                    at += m;
                    self.accumulate(p, &dp);
                }
            }

            Op::GatherRows { a, indices } => {
                let (m, n) = self.data(*a).shape();
                let mut da = Matrix::zeros(m, n);
                for (r, &i) in indices.iter().enumerate() {
                    for j in 0..n {
                        da.set(i, j, da.get(i, j) + d_out.get(r, j));
                    }
                }
                self.accumulate(*a, &da);
            }

            Op::ColMax { a, argrows } | Op::ColMin { a, argrows } => {
                let (m, n) = self.data(*a).shape();
                let mut da = Matrix::zeros(m, n);
                for (j, &i) in argrows.iter().enumerate() {
                    da.set(i, j, d_out.get(0, j));
                }
                self.accumulate(*a, &da);
            }

            Op::SumAll { a } => {
                let d = d_out.get(0, 0);
                let (m, n) = self.data(*a).shape();
                self.accumulate(*a, &Matrix::from_vec(m, n, vec![d; m * n]));
            }

            Op::MeanAll { a } => {
                let (m, n) = self.data(*a).shape();
                let d = d_out.get(0, 0) / (m * n) as f64;
                self.accumulate(*a, &Matrix::from_vec(m, n, vec![d; m * n]));
            }

            Op::CosineSimilarity { a, b, eps } => {
                let d = d_out.get(0, 0);
                let av = self.data(*a).as_slice().to_vec();
                let bv = self.data(*b).as_slice().to_vec();
                let dot: f64 = av.iter().zip(&bv).map(|(x, y)| x * y).sum();
                let na_raw = av.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb_raw = bv.iter().map(|x| x * x).sum::<f64>().sqrt();
                let na = na_raw.max(*eps);
                let nb = nb_raw.max(*eps);
                let s = dot / (na * nb);
                let mut da = vec![0.0; av.len()];
                let mut db = vec![0.0; bv.len()];
                for i in 0..av.len() {
                    let mut ga = bv[i] / (na * nb);
                    if na_raw > *eps {
                        ga -= s * av[i] / (na * na);
                    }
                    let mut gb = av[i] / (na * nb);
                    if nb_raw > *eps {
                        gb -= s * bv[i] / (nb * nb);
                    }
                    da[i] = d * ga;
                    db[i] = d * gb;
                }
                let ashape = self.data(*a).shape();
                let bshape = self.data(*b).shape();
                self.accumulate(*a, &Matrix::from_vec(ashape.0, ashape.1, da));
                self.accumulate(*b, &Matrix::from_vec(bshape.0, bshape.1, db));
            }

            Op::SimilarityPenalty { theta, target, curvature, eps } => {
                let da = Matrix::from_vec(
                    d_out.rows(),
                    d_out.cols(),
                    d_out
                        .as_slice()
                        .iter()
                        .zip(self.data(*theta).as_slice())
                        .map(|(d, &t)| d * similarity_penalty_dtheta(t, *target, *curvature, *eps))
                        .collect(),
                );
                self.accumulate(*theta, &da);
            }

            Op::GroupMeanRows { a, groups } => {
                let (m, n) = self.data(*a).shape();
                let mut da = Matrix::zeros(m, n);
                for (g, members) in groups.iter().enumerate() {
                    if members.is_empty() {
                        continue;
                    }
                    let inv = 1.0 / members.len() as f64;
                    for &i in members {
                        for j in 0..n {
                            da.set(i, j, da.get(i, j) + d_out.get(g, j) * inv);
                        }
                    }
                }
                self.accumulate(*a, &da);
            }
        }
    }
}

/// Population mean and variance of one channel.
fn channel_stats(row: &[f64]) -> (f64, f64) {
    let len = row.len() as f64;
    let mu = row.iter().sum::<f64>() / len;
    let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<f64>() / len;
    (mu, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn matmul_forward_and_backward() {
        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::from_rows(&[vec![1.0, 2.0]]));
        let b = tape.leaf(Matrix::from_rows(&[vec![3.0], vec![4.0]]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.data(c).get(0, 0), 11.0);
        let s = tape.sum_all(c).unwrap();
        tape.backward(s).unwrap();
        // dA = dC·Bᵀ = [3, 4], dB = Aᵀ·dC = [[1],[2]]
        assert_eq!(tape.grad(a).as_slice(), &[3.0, 4.0]);
        assert_eq!(tape.grad(b).as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn matmul_identity_case() {
        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let eye = tape.leaf(Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
        let c = tape.matmul(a, eye).unwrap();
        assert!(tape.data(c).bits_eq(tape.data(a)));
    }

    #[test]
    fn matmul_grad_of_sum_is_all_ones_pattern() {
        // grad of sum(A·B) w.r.t. A with B = [[1],[1]] is ones(m,1)·Bᵀ: all ones.
        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::from_rows(&[vec![0.3, -0.7], vec![2.0, 5.0]]));
        let b = tape.leaf(Matrix::from_rows(&[vec![1.0], vec![1.0]]));
        let c = tape.matmul(a, b).unwrap();
        let s = tape.sum_all(c).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(a).as_slice(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn matmul_shape_error_reports_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::zeros(2, 3));
        let b = tape.leaf(Matrix::zeros(4, 5));
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("4x5"), "{msg}");
    }

    #[test]
    fn conv1d_hand_example() {
        // x=[1,1,1], kernel=[1,1,1], bias=0 → padded correlation [2,3,2].
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::row_vector(&[1.0, 1.0, 1.0]));
        let k = tape.leaf(Matrix::row_vector(&[1.0, 1.0, 1.0]));
        let b = tape.leaf(Matrix::row_vector(&[0.0]));
        let y = tape.conv1d(x, k, b).unwrap();
        assert_eq!(tape.data(y).as_slice(), &[2.0, 3.0, 2.0]);
    }

    #[test]
    fn conv1d_identity_kernel() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::row_vector(&[0.5, -1.0, 2.0, 7.0]));
        let k = tape.leaf(Matrix::row_vector(&[0.0, 1.0, 0.0]));
        let b = tape.leaf(Matrix::row_vector(&[0.0]));
        let y = tape.conv1d(x, k, b).unwrap();
        assert!(tape.data(y).bits_eq(tape.data(x)));
    }

    #[test]
    fn conv1d_zero_input_passes_bias() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::zeros(2, 5));
        let k = tape.leaf(Matrix::zeros(3, 6));
        let b = tape.leaf(Matrix::row_vector(&[1.5, -0.25, 4.0]));
        let y = tape.conv1d(x, k, b).unwrap();
        for o in 0..3 {
            for pos in 0..5 {
                assert_eq!(tape.data(y).get(o, pos), tape.data(b).as_slice()[o]);
            }
        }
    }

    #[test]
    fn avgpool_hand_examples() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::row_vector(&[2.0, 4.0, 6.0, 8.0]));
        let y = tape.avgpool1d(x, 2).unwrap();
        assert_eq!(tape.data(y).as_slice(), &[3.0, 7.0]);

        let x2 = tape.leaf(Matrix::row_vector(&[1.0, 2.0, 3.0]));
        let y2 = tape.avgpool1d(x2, 2).unwrap();
        assert_eq!(tape.data(y2).as_slice(), &[1.5, 3.0]);

        let y3 = tape.avgpool1d(x2, 1).unwrap();
        assert!(tape.data(y3).bits_eq(tape.data(x2)));

        assert!(matches!(tape.avgpool1d(x, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn leaky_relu_cases() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::row_vector(&[5.0, -1.0, 0.0]));
        let y = tape.leaky_relu(x, 0.01);
        assert_eq!(tape.data(y).as_slice(), &[5.0, -0.01, 0.0]);
        let s = tape.sum_all(y).unwrap();
        tape.backward(s).unwrap();
        // Kink at 0 takes the negative-side slope.
        assert_eq!(tape.grad(x).as_slice(), &[1.0, 0.01, 0.01]);
    }

    #[test]
    fn sigmoid_saturation_and_derivative() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::row_vector(&[0.0, 100.0, -100.0]));
        let y = tape.sigmoid(x);
        let v = tape.data(y).as_slice();
        assert_eq!(v[0], 0.5);
        assert!((v[1] - 1.0).abs() < 1e-12 && v[1].is_finite());
        assert!(v[2] < 1e-12 && v[2] >= 0.0);
        let s = tape.sum_all(y).unwrap();
        tape.backward(s).unwrap();
        assert!(close(tape.grad(x).as_slice()[0], 0.25, 1e-15));
    }

    #[test]
    fn adain_hand_example() {
        // x=[1,3]: mu=2, population var=1; scale=2, shift=0 → [-2, 2].
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::row_vector(&[1.0, 3.0]));
        let sc = tape.leaf(Matrix::row_vector(&[2.0]));
        let sh = tape.leaf(Matrix::row_vector(&[0.0]));
        let y = tape.adain(x, sc, sh, 1e-12).unwrap();
        let v = tape.data(y).as_slice();
        assert!(close(v[0], -2.0, 1e-9) && close(v[1], 2.0, 1e-9));
    }

    #[test]
    fn adain_constant_channel_yields_shift() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::row_vector(&[4.0, 4.0, 4.0]));
        let sc = tape.leaf(Matrix::row_vector(&[3.0]));
        let sh = tape.leaf(Matrix::row_vector(&[-1.25]));
        let y = tape.adain(x, sc, sh, 1e-5).unwrap();
        for &v in tape.data(y).as_slice() {
            assert!(close(v, -1.25, 1e-12));
        }
    }

    #[test]
    fn adain_identity_style() {
        // Unit-variance zero-mean input with scale 1 and shift equal to the
        // channel mean reproduces the input.
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::row_vector(&[-1.0, 1.0]));
        let sc = tape.leaf(Matrix::row_vector(&[1.0]));
        let sh = tape.leaf(Matrix::row_vector(&[0.0]));
        let y = tape.adain(x, sc, sh, 1e-14).unwrap();
        let v = tape.data(y).as_slice();
        assert!(close(v[0], -1.0, 1e-6) && close(v[1], 1.0, 1e-6));
    }

    #[test]
    fn cosine_similarity_cases() {
        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::row_vector(&[2.0, -1.0, 0.5]));
        let s_same = {
            let b = tape.leaf(Matrix::row_vector(&[2.0, -1.0, 0.5]));
            let s = tape.cosine_similarity(a, b, 1e-9).unwrap();
            tape.scalar_value(s)
        };
        assert!(close(s_same, 1.0, 1e-12));

        let p = tape.leaf(Matrix::row_vector(&[1.0, 0.0]));
        let q = tape.leaf(Matrix::row_vector(&[0.0, 1.0]));
        let s_orth = tape.cosine_similarity(p, q, 1e-9).unwrap();
        assert_eq!(tape.scalar_value(s_orth), 0.0);

        let r = tape.leaf(Matrix::row_vector(&[1.0, 1.0]));
        let s_half = tape.cosine_similarity(p, r, 1e-9).unwrap();
        assert!(close(tape.scalar_value(s_half), 0.70710678, 1e-8));
    }

    #[test]
    fn maxmin_columns_route_to_first_attaining_row() {
        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 0.0]]));
        let mx = tape.col_max(a).unwrap();
        let mn = tape.col_min(a).unwrap();
        assert_eq!(tape.data(mx).as_slice(), &[3.0, 2.0]);
        assert_eq!(tape.data(mn).as_slice(), &[1.0, 0.0]);
        let d = tape.sub(mx, mn).unwrap();
        assert_eq!(tape.data(d).as_slice(), &[2.0, 2.0]);
        let s = tape.sum_all(d).unwrap();
        tape.backward(s).unwrap();
        // max picked rows (1,0), min picked rows (0,1).
        assert_eq!(tape.grad(a).as_slice(), &[-1.0, 1.0, 1.0, -1.0]);
    }

    #[test]
    fn backward_is_linear_in_the_loss() {
        // grad of (alpha*f + beta*g) equals alpha*grad f + beta*grad g.
        let build = |tape: &mut Tape, x: Value| -> (Value, Value) {
            let f = tape.sigmoid(x);
            let fsum = tape.sum_all(f).unwrap();
            let g = tape.mul(x, x).unwrap();
            let gsum = tape.sum_all(g).unwrap();
            (fsum, gsum)
        };
        let point = Matrix::row_vector(&[0.3, -0.8, 1.7]);
        let (alpha, beta) = (2.5, -0.75);

        let grad_of = |which: u8| -> Vec<f64> {
            let mut tape = Tape::new();
            let x = tape.leaf(point.clone());
            let (f, g) = build(&mut tape, x);
            let root = match which {
                0 => f,
                1 => g,
                _ => {
                    let fa = tape.scale(f, alpha);
                    let gb = tape.scale(g, beta);
                    tape.add(fa, gb).unwrap()
                }
            };
            tape.backward(root).unwrap();
            tape.grad(x).as_slice().to_vec()
        };
        let gf = grad_of(0);
        let gg = grad_of(1);
        let gc = grad_of(2);
        for i in 0..3 {
            assert!(close(gc[i], alpha * gf[i] + beta * gg[i], 1e-10));
        }
    }

    #[test]
    fn tape_forward_is_bitwise_deterministic() {
        let run = || -> Vec<u64> {
            let mut tape = Tape::new();
            let x = tape.leaf(Matrix::row_vector(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]));
            let x2 = tape.reshape(x, 2, 3).unwrap();
            let k = tape.leaf(Matrix::from_rows(&[vec![0.3, -0.2, 0.9, 0.1, 0.0, -0.5]]));
            let b = tape.leaf(Matrix::row_vector(&[0.05]));
            let c = tape.conv1d(x2, k, b).unwrap();
            let p = tape.avgpool1d(c, 2).unwrap();
            let a = tape.leaky_relu(p, 0.01);
            let s = tape.sigmoid(a);
            tape.data(s).as_slice().iter().map(|v| v.to_bits()).collect()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::row_vector(&[1.0, 2.0]));
        let d = tape.detach(x);
        let y = tape.mul(d, d).unwrap();
        let s = tape.sum_all(y).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn group_mean_rows_handles_empty_groups() {
        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let groups: RowGroups = Rc::new(vec![vec![0, 1], vec![], vec![1]]);
        let m = tape.group_mean_rows(a, groups).unwrap();
        assert_eq!(tape.data(m).row(0), &[2.0, 3.0]);
        assert_eq!(tape.data(m).row(1), &[0.0, 0.0]);
        assert_eq!(tape.data(m).row(2), &[3.0, 4.0]);
    }

    #[test]
    fn similarity_penalty_hand_values() {
        let eps = 1e-4;
        assert!(close(similarity_penalty_value(0.75, 0.5, 1.0, eps), 4.0 / 3.0, 1e-12));
        assert!(close(similarity_penalty_value(0.75, 0.5, 2.0, eps), 16.0 / 9.0, 1e-12));
        assert_eq!(similarity_penalty_value(0.5, 0.5, 2.0, eps), 0.0);
    }
}
