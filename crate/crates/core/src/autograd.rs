//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records every primitive applied during a forward pass. Nodes
//! are appended in evaluation order, so the node vector is already a
//! topological order and [`Graph::backward`] walks it in reverse, visiting
//! each node once. Gradients accumulate by summation over all paths.
//!
//! Parameters enter the graph by name ([`Graph::param`], [`Graph::param_rows`])
//! and borrow their storage, so building a graph never copies weight matrices.
//! The gradient map returned by `backward` is keyed by those names.
//!
//! Conventions:
//! - ReLU has derivative 0 at exactly 0.
//! - Column max routes its gradient to the lowest row index among ties.
//! - Softmax subtracts the maximum before exponentiating.

use std::borrow::Cow;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(String),
    ParamRows { name: String, rows: Vec<usize> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine { x: Var, scale: f64 },
    MulConst { x: Var, mask: Tensor },
    ScaleRows { x: Var, weights: Vec<f64> },
    RowScale { x: Var, weights: Var },
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    MatVec(Var, Var),
    AddBias { x: Var, bias: Var },
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softmax { x: Var, valid: Option<usize> },
    Concat(Vec<Var>),
    ConcatCols(Var, Var),
    Slice { x: Var, start: usize },
    Row { x: Var, index: usize },
    StackRows(Vec<Var>),
    Unfold { x: Var, size: usize },
    ColMax { x: Var, argmax: Vec<usize> },
    MeanRows(Var),
    Sum(Var),
    CrossEntropy { logits: Var, gold: usize },
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Gradients of a scalar with respect to named parameters.
///
/// Whole-tensor parameters are stored densely; parameters entered through
/// [`Graph::param_rows`] (embedding lookups) keep only the touched rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    dense: BTreeMap<String, Tensor>,
    rows: BTreeMap<String, BTreeMap<usize, Vec<f64>>>,
}

impl Gradients {
    pub fn dense(&self, name: &str) -> Option<&Tensor> {
        self.dense.get(name)
    }

    pub fn rows(&self, name: &str) -> Option<&BTreeMap<usize, Vec<f64>>> {
        self.rows.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.dense
            .keys()
            .chain(self.rows.keys())
            .map(String::as_str)
    }

    /// Adds `other` into `self`. Summation happens in a fixed key order.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (name, g) in &other.dense {
            match self.dense.get_mut(name) {
                Some(t) => t.add_assign(g),
                None => {
                    self.dense.insert(name.clone(), g.clone());
                }
            }
        }
        for (name, rows) in &other.rows {
            let dst = self.rows.entry(name.clone()).or_default();
            for (&r, g) in rows {
                match dst.get_mut(&r) {
                    Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                    None => {
                        dst.insert(r, g.clone());
                    }
                }
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.dense.values_mut().for_each(|t| t.scale(k));
        for rows in self.rows.values_mut() {
            rows.values_mut()
                .for_each(|r| r.iter_mut().for_each(|x| *x *= k));
        }
    }

    /// Adds `delta` to one scalar of a dense gradient. Used to corrupt a
    /// derivative on purpose in gradient-check negative controls.
    pub fn perturb(&mut self, name: &str, index: usize, delta: f64) -> Result<()> {
        if let Some(t) = self.dense.get_mut(name) {
            t.data_mut()[index] += delta;
            return Ok(());
        }
        if let Some(rows) = self.rows.get_mut(name) {
            if let Some((_, row)) = rows.iter_mut().next() {
                let i = index % row.len();
                row[i] += delta;
                return Ok(());
            }
        }
        Err(Error::UnknownParam(name.to_string()))
    }

    /// Full-shape gradient for every parameter in `params`; parameters the
    /// loss does not depend on get zeros.
    pub fn to_dense(&self, params: &ParamStore) -> BTreeMap<String, Tensor> {
        params
            .iter()
            .map(|(name, p)| {
                let mut t = self
                    .dense
                    .get(name)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(p.shape()));
                if let Some(rows) = self.rows.get(name) {
                    for (&r, g) in rows {
                        t.row_mut(r).iter_mut().zip(g).for_each(|(a, b)| *a += b);
                    }
                }
                (name.to_string(), t)
            })
            .collect()
    }
}

/// A single forward pass recorded for differentiation.
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
    params: BTreeMap<String, Var>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: BTreeMap::new(),
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
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Cow<'a, Tensor>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(Cow::Owned(value), op, rg)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Cow::Owned(value), Op::Constant, false)
    }

    /// Enters a named parameter. Repeated calls with the same name return the
    /// same node so that shared weights accumulate a single gradient.
    pub fn param(&mut self, name: &str, value: &'a Tensor) -> Var {
        if let Some(&v) = self.params.get(name) {
            return v;
        }
        let v = self.push(Cow::Borrowed(value), Op::Param(name.to_string()), true);
        self.params.insert(name.to_string(), v);
        v
    }

    /// Gathers `rows` of a named matrix parameter into a `[rows.len() × cols]`
    /// matrix. The gradient is scattered back to the gathered rows only.
    pub fn param_rows(&mut self, name: &str, value: &'a Tensor, rows: &[usize]) -> Result<Var> {
        if value.rank() != 2 || rows.is_empty() || rows.iter().any(|&r| r >= value.rows()) {
            return Err(Error::shape("param_rows", &[value.shape(), &[rows.len()]]));
        }
        let cols = value.cols();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            data.extend_from_slice(value.row(r));
        }
        let t = Tensor::matrix(rows.len(), cols, data)?;
        Ok(self.push(
            Cow::Owned(t),
            Op::ParamRows {
                name: name.to_string(),
                rows: rows.to_vec(),
            },
            true,
        ))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, &[self.shape(a), self.shape(b)]));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let t = self.zip_with(a, b, |x, y| x + y);
        Ok(self.push_op(t, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let t = self.zip_with(a, b, |x, y| x - y);
        Ok(self.push_op(t, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let t = self.zip_with(a, b, |x, y| x * y);
        Ok(self.push_op(t, Op::Mul(a, b), &[a, b]))
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let t = self.value(x).map(|v| scale * v + shift);
        self.push_op(t, Op::Affine { x, scale }, &[x])
    }

    /// `1 - x`, elementwise.
    pub fn one_minus(&mut self, x: Var) -> Var {
        self.affine(x, -1.0, 1.0)
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        self.affine(x, k, 0.0)
    }

    /// Elementwise product with a constant tensor of the same shape.
    pub fn mul_const(&mut self, x: Var, mask: Tensor) -> Result<Var> {
        if self.shape(x) != mask.shape() {
            return Err(Error::shape("mul_const", &[self.shape(x), mask.shape()]));
        }
        let t = self.zip_const(x, &mask);
        Ok(self.push_op(t, Op::MulConst { x, mask }, &[x]))
    }

    fn zip_const(&self, x: Var, mask: &Tensor) -> Tensor {
        let tx = self.value(x);
        let data = tx.data().iter().zip(mask.data()).map(|(a, b)| a * b).collect();
        Tensor::new(tx.shape().to_vec(), data).expect("same shape")
    }

    /// Scales row `i` of a matrix by the constant `weights[i]`.
    pub fn scale_rows(&mut self, x: Var, weights: &[f64]) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 2 || tx.rows() != weights.len() {
            return Err(Error::shape("scale_rows", &[tx.shape(), &[weights.len()]]));
        }
        let mut t = tx.clone();
        for (i, &w) in weights.iter().enumerate() {
            t.row_mut(i).iter_mut().for_each(|v| *v *= w);
        }
        Ok(self.push_op(
            t,
            Op::ScaleRows {
                x,
                weights: weights.to_vec(),
            },
            &[x],
        ))
    }

    /// Scales row `i` of a matrix by entry `i` of a vector node.
    pub fn row_scale(&mut self, x: Var, weights: Var) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(weights));
        if tx.rank() != 2 || tw.rank() != 1 || tx.rows() != tw.len() {
            return Err(Error::shape("row_scale", &[tx.shape(), tw.shape()]));
        }
        let mut t = tx.clone();
        for (i, &w) in tw.data().iter().enumerate() {
            t.row_mut(i).iter_mut().for_each(|v| *v *= w);
        }
        Ok(self.push_op(t, Op::RowScale { x, weights }, &[x, weights]))
    }

    /// `a · b` for `a: [n × k]`, `b: [k × m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows() {
            return Err(Error::shape("matmul", &[ta.shape(), tb.shape()]));
        }
        let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let arow = ta.row(i);
            let orow = &mut out[i * m..(i + 1) * m];
            for (p, &av) in arow.iter().enumerate().take(k) {
                for (o, &bv) in orow.iter_mut().zip(tb.row(p)) {
                    *o += av * bv;
                }
            }
        }
        let t = Tensor::matrix(n, m, out)?;
        Ok(self.push_op(t, Op::MatMul(a, b), &[a, b]))
    }

    /// `a · bᵀ` for `a: [n × k]`, `b: [m × k]`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.cols() {
            return Err(Error::shape("matmul_bt", &[ta.shape(), tb.shape()]));
        }
        let (n, m) = (ta.rows(), tb.rows());
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            let arow = ta.row(i);
            for j in 0..m {
                out.push(dot(arow, tb.row(j)));
            }
        }
        let t = Tensor::matrix(n, m, out)?;
        Ok(self.push_op(t, Op::MatMulBt(a, b), &[a, b]))
    }

    /// `w · x` for `w: [r × c]`, `x: [c]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (tw, tx) = (self.value(w), self.value(x));
        if tw.rank() != 2 || tx.rank() != 1 || tw.cols() != tx.len() {
            return Err(Error::shape("matvec", &[tw.shape(), tx.shape()]));
        }
        let out = (0..tw.rows()).map(|i| dot(tw.row(i), tx.data())).collect();
        Ok(self.push_op(Tensor::vector(out), Op::MatVec(w, x), &[w, x]))
    }

    /// Adds a bias vector to a vector, or to every row of a matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let width = if tx.rank() == 2 { tx.cols() } else { tx.len() };
        if tb.rank() != 1 || tb.len() != width {
            return Err(Error::shape("add_bias", &[tx.shape(), tb.shape()]));
        }
        let mut t = tx.clone();
        for (i, v) in t.data_mut().iter_mut().enumerate() {
            *v += tb.data()[i % width];
        }
        Ok(self.push_op(t, Op::AddBias { x, bias }, &[x, bias]))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x).map(sigmoid);
        self.push_op(t, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let t = self.value(x).map(f64::tanh);
        self.push_op(t, Op::Tanh(x), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push_op(t, Op::Relu(x), &[x])
    }

    /// Softmax of a vector, or of every row of a matrix.
    pub fn softmax(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let mut t = tx.clone();
        let c = if tx.rank() == 2 { tx.cols() } else { tx.len() };
        for row in t.data_mut().chunks_mut(c) {
            softmax_in_place(row);
        }
        self.push_op(t, Op::Softmax { x, valid: None }, &[x])
    }

    /// Softmax over the first `valid` entries of a vector; later entries are 0.
    pub fn softmax_prefix(&mut self, x: Var, valid: usize) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 1 || valid == 0 || valid > tx.len() {
            return Err(Error::shape("softmax_prefix", &[tx.shape(), &[valid]]));
        }
        let mut t = tx.clone();
        softmax_in_place(&mut t.data_mut()[..valid]);
        t.data_mut()[valid..].iter_mut().for_each(|v| *v = 0.0);
        Ok(self.push_op(
            t,
            Op::Softmax {
                x,
                valid: Some(valid),
            },
            &[x],
        ))
    }

    /// Concatenates vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() || parts.iter().any(|&p| self.value(p).rank() != 1) {
            let shapes: Vec<&[usize]> = parts.iter().map(|&p| self.shape(p)).collect();
            return Err(Error::shape("concat", &shapes));
        }
        let data = parts
            .iter()
            .flat_map(|&p| self.value(p).data().iter().copied())
            .collect();
        Ok(self.push_op(Tensor::vector(data), Op::Concat(parts.to_vec()), parts))
    }

    /// Joins two matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.rows() != tb.rows() {
            return Err(Error::shape("concat_cols", &[ta.shape(), tb.shape()]));
        }
        let (r, ca, cb) = (ta.rows(), ta.cols(), tb.cols());
        let mut data = Vec::with_capacity(r * (ca + cb));
        for i in 0..r {
            data.extend_from_slice(ta.row(i));
            data.extend_from_slice(tb.row(i));
        }
        let t = Tensor::matrix(r, ca + cb, data)?;
        Ok(self.push_op(t, Op::ConcatCols(a, b), &[a, b]))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 1 || len == 0 || start + len > tx.len() {
            return Err(Error::shape("slice", &[tx.shape(), &[start, len]]));
        }
        let t = Tensor::vector(tx.data()[start..start + len].to_vec());
        Ok(self.push_op(t, Op::Slice { x, start }, &[x]))
    }

    pub fn row(&mut self, x: Var, index: usize) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 2 || index >= tx.rows() {
            return Err(Error::shape("row", &[tx.shape(), &[index]]));
        }
        let t = Tensor::vector(tx.row(index).to_vec());
        Ok(self.push_op(t, Op::Row { x, index }, &[x]))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let shapes: Vec<&[usize]> = rows.iter().map(|&p| self.shape(p)).collect();
        if rows.is_empty() || shapes.iter().any(|s| s.len() != 1 || s != &shapes[0]) {
            return Err(Error::shape("stack_rows", &shapes));
        }
        let c = shapes[0][0];
        let data = rows
            .iter()
            .flat_map(|&p| self.value(p).data().iter().copied())
            .collect();
        let t = Tensor::matrix(rows.len(), c, data)?;
        Ok(self.push_op(t, Op::StackRows(rows.to_vec()), rows))
    }

    /// Sliding windows of `size` consecutive rows, each flattened:
    /// `[p × d]` becomes `[(p − size + 1) × size·d]`.
    pub fn unfold(&mut self, x: Var, size: usize) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 2 || size == 0 || tx.rows() < size {
            return Err(Error::shape("unfold", &[tx.shape(), &[size]]));
        }
        let windows = tx.rows() - size + 1;
        let d = tx.cols();
        let data = tx.data()[..]
            .windows(size * d)
            .step_by(d)
            .take(windows)
            .flatten()
            .copied()
            .collect();
        let t = Tensor::matrix(windows, size * d, data)?;
        Ok(self.push_op(t, Op::Unfold { x, size }, &[x]))
    }

    /// Maximum of every column; ties resolve to the lowest row.
    pub fn col_max(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 2 {
            return Err(Error::shape("col_max", &[tx.shape()]));
        }
        let (r, c) = (tx.rows(), tx.cols());
        let mut argmax = vec![0usize; c];
        let mut best = tx.row(0).to_vec();
        for i in 1..r {
            for (j, &v) in tx.row(i).iter().enumerate() {
                if v > best[j] {
                    best[j] = v;
                    argmax[j] = i;
                }
            }
        }
        Ok(self.push_op(Tensor::vector(best), Op::ColMax { x, argmax }, &[x]))
    }

    /// Row index chosen by a [`Graph::col_max`] node for each column.
    pub fn argmax_rows(&self, v: Var) -> Option<&[usize]> {
        match &self.nodes[v.0].op {
            Op::ColMax { argmax, .. } => Some(argmax),
            _ => None,
        }
    }

    /// Unweighted mean of the rows of a matrix.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 2 {
            return Err(Error::shape("mean_rows", &[tx.shape()]));
        }
        let r = tx.rows() as f64;
        let mut out = vec![0.0; tx.cols()];
        for i in 0..tx.rows() {
            out.iter_mut().zip(tx.row(i)).for_each(|(o, v)| *o += v);
        }
        out.iter_mut().for_each(|o| *o /= r);
        Ok(self.push_op(Tensor::vector(out), Op::MeanRows(x), &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push_op(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// `−log softmax(logits)[gold]`, via log-sum-exp.
    pub fn cross_entropy(&mut self, logits: Var, gold: usize) -> Result<Var> {
        let tz = self.value(logits);
        if tz.rank() != 1 || gold >= tz.len() {
            return Err(Error::shape("cross_entropy", &[tz.shape(), &[gold]]));
        }
        let z = tz.data();
        let loss = log_sum_exp(z) - z[gold];
        Ok(self.push_op(
            Tensor::scalar(loss),
            Op::CrossEntropy { logits, gold },
            &[logits],
        ))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::new(lt.shape().to_vec(), vec![1.0])?);
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let y = &*node.value;
            match &node.op {
                Op::Constant => {}
                Op::Param(name) => {
                    out.dense.insert(name.clone(), g);
                }
                Op::ParamRows { name, rows } => {
                    let dst = out.rows.entry(name.clone()).or_default();
                    for (k, &r) in rows.iter().enumerate() {
                        let gr = g.row(k);
                        match dst.get_mut(&r) {
                            Some(acc) => acc.iter_mut().zip(gr).for_each(|(a, b)| *a += b),
                            None => {
                                dst.insert(r, gr.to_vec());
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    self.acc(&mut grads, *a, || g.clone());
                    self.acc(&mut grads, *b, || g.clone());
                }
                Op::Sub(a, b) => {
                    self.acc(&mut grads, *a, || g.clone());
                    self.acc(&mut grads, *b, || g.map(|v| -v));
                }
                Op::Mul(a, b) => {
                    self.acc(&mut grads, *a, || hadamard(&g, self.value(*b)));
                    self.acc(&mut grads, *b, || hadamard(&g, self.value(*a)));
                }
                Op::Affine { x, scale } => {
                    self.acc(&mut grads, *x, || g.map(|v| v * scale));
                }
                Op::MulConst { x, mask } => {
                    self.acc(&mut grads, *x, || hadamard(&g, mask));
                }
                Op::ScaleRows { x, weights } => {
                    self.acc(&mut grads, *x, || {
                        let mut t = g.clone();
                        for (i, &w) in weights.iter().enumerate() {
                            t.row_mut(i).iter_mut().for_each(|v| *v *= w);
                        }
                        t
                    });
                }
                Op::RowScale { x, weights } => {
                    let tx = self.value(*x);
                    let tw = self.value(*weights);
                    self.acc(&mut grads, *x, || {
                        let mut t = g.clone();
                        for (i, &w) in tw.data().iter().enumerate() {
                            t.row_mut(i).iter_mut().for_each(|v| *v *= w);
                        }
                        t
                    });
                    self.acc(&mut grads, *weights, || {
                        Tensor::vector((0..tx.rows()).map(|i| dot(g.row(i), tx.row(i))).collect())
                    });
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    // dA = G·Bᵀ, dB = Aᵀ·G
                    self.acc(&mut grads, *a, || {
                        let mut t = Tensor::zeros(ta.shape());
                        for i in 0..ta.rows() {
                            let grow = g.row(i);
                            for (p, o) in t.row_mut(i).iter_mut().enumerate() {
                                *o = dot(grow, tb.row(p));
                            }
                        }
                        t
                    });
                    self.acc(&mut grads, *b, || {
                        let mut t = Tensor::zeros(tb.shape());
                        for i in 0..ta.rows() {
                            let grow = g.row(i);
                            for (p, &av) in ta.row(i).iter().enumerate() {
                                t.row_mut(p).iter_mut().zip(grow).for_each(|(o, gv)| *o += av * gv);
                            }
                        }
                        t
                    });
                }
                Op::MatMulBt(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    // dA = G·B, dB = Gᵀ·A
                    self.acc(&mut grads, *a, || {
                        let mut t = Tensor::zeros(ta.shape());
                        for i in 0..ta.rows() {
                            for (j, &gv) in g.row(i).iter().enumerate() {
                                t.row_mut(i).iter_mut().zip(tb.row(j)).for_each(|(o, bv)| *o += gv * bv);
                            }
                        }
                        t
                    });
                    self.acc(&mut grads, *b, || {
                        let mut t = Tensor::zeros(tb.shape());
                        for i in 0..ta.rows() {
                            for (j, &gv) in g.row(i).iter().enumerate() {
                                t.row_mut(j).iter_mut().zip(ta.row(i)).for_each(|(o, av)| *o += gv * av);
                            }
                        }
                        t
                    });
                }
                Op::MatVec(w, x) => {
                    let (tw, tx) = (self.value(*w), self.value(*x));
                    self.acc(&mut grads, *w, || {
                        let mut t = Tensor::zeros(tw.shape());
                        for (i, &gv) in g.data().iter().enumerate() {
                            t.row_mut(i).iter_mut().zip(tx.data()).for_each(|(o, xv)| *o = gv * xv);
                        }
                        t
                    });
                    self.acc(&mut grads, *x, || {
                        let mut out = vec![0.0; tx.len()];
                        for (i, &gv) in g.data().iter().enumerate() {
                            out.iter_mut().zip(tw.row(i)).for_each(|(o, wv)| *o += gv * wv);
                        }
                        Tensor::vector(out)
                    });
                }
                Op::AddBias { x, bias } => {
                    self.acc(&mut grads, *x, || g.clone());
                    self.acc(&mut grads, *bias, || {
                        let width = self.value(*bias).len();
                        let mut out = vec![0.0; width];
                        for row in g.data().chunks(width) {
                            out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
                        }
                        Tensor::vector(out)
                    });
                }
                Op::Sigmoid(x) => {
                    self.acc(&mut grads, *x, || zip_map(&g, y, |gv, s| gv * s * (1.0 - s)));
                }
                Op::Tanh(x) => {
                    self.acc(&mut grads, *x, || zip_map(&g, y, |gv, t| gv * (1.0 - t * t)));
                }
                Op::Relu(x) => {
                    let tx = self.value(*x);
                    self.acc(&mut grads, *x, || zip_map(&g, tx, |gv, v| if v > 0.0 { gv } else { 0.0 }));
                }
                Op::Softmax { x, valid } => {
                    self.acc(&mut grads, *x, || {
                        let mut t = Tensor::zeros(y.shape());
                        let c = match (y.rank(), valid) {
                            (2, _) => y.cols(),
                            (_, Some(n)) => *n,
                            _ => y.len(),
                        };
                        let width = if y.rank() == 2 { y.cols() } else { y.len() };
                        let rows = y.len() / width;
                        for r in 0..rows {
                            let ys = &y.data()[r * width..r * width + c];
                            let gs = &g.data()[r * width..r * width + c];
                            let inner = dot(ys, gs);
                            for (k, o) in t.data_mut()[r * width..r * width + c].iter_mut().enumerate() {
                                *o = ys[k] * (gs[k] - inner);
                            }
                        }
                        t
                    });
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        self.acc(&mut grads, p, || Tensor::vector(g.data()[offset..offset + n].to_vec()));
                        offset += n;
                    }
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols();
                    let cb = self.value(*b).cols();
                    let r = g.rows();
                    self.acc(&mut grads, *a, || {
                        let data = (0..r).flat_map(|i| g.row(i)[..ca].iter().copied()).collect();
                        Tensor::matrix(r, ca, data).expect("shape")
                    });
                    self.acc(&mut grads, *b, || {
                        let data = (0..r).flat_map(|i| g.row(i)[ca..].iter().copied()).collect();
                        Tensor::matrix(r, cb, data).expect("shape")
                    });
                }
                Op::Slice { x, start } => {
                    self.acc(&mut grads, *x, || {
                        let mut t = Tensor::zeros(self.shape(*x));
                        t.data_mut()[*start..*start + g.len()].copy_from_slice(g.data());
                        t
                    });
                }
                Op::Row { x, index } => {
                    self.acc(&mut grads, *x, || {
                        let mut t = Tensor::zeros(self.shape(*x));
                        t.row_mut(*index).copy_from_slice(g.data());
                        t
                    });
                }
                Op::StackRows(rows) => {
                    for (i, &r) in rows.iter().enumerate() {
                        self.acc(&mut grads, r, || Tensor::vector(g.row(i).to_vec()));
                    }
                }
                Op::Unfold { x, size } => {
                    self.acc(&mut grads, *x, || {
                        let mut t = Tensor::zeros(self.shape(*x));
                        let d = t.cols();
                        for w in 0..g.rows() {
                            let dst = &mut t.data_mut()[w * d..(w + size) * d];
                            dst.iter_mut().zip(g.row(w)).for_each(|(o, v)| *o += v);
                        }
                        t
                    });
                }
                Op::ColMax { x, argmax } => {
                    self.acc(&mut grads, *x, || {
                        let mut t = Tensor::zeros(self.shape(*x));
                        let c = t.cols();
                        for (j, &r) in argmax.iter().enumerate() {
                            t.data_mut()[r * c + j] += g.data()[j];
                        }
                        t
                    });
                }
                Op::MeanRows(x) => {
                    self.acc(&mut grads, *x, || {
                        let shape = self.shape(*x);
                        let r = shape[0] as f64;
                        let mut t = Tensor::zeros(shape);
                        for i in 0..shape[0] {
                            t.row_mut(i).iter_mut().zip(g.data()).for_each(|(o, v)| *o = v / r);
                        }
                        t
                    });
                }
                Op::Sum(x) => {
                    self.acc(&mut grads, *x, || Tensor::full(self.shape(*x), g.item()));
                }
                Op::CrossEntropy { logits, gold } => {
                    self.acc(&mut grads, *logits, || {
                        let mut p = self.value(*logits).data().to_vec();
                        softmax_in_place(&mut p);
                        p[*gold] -= 1.0;
                        p.iter_mut().for_each(|v| *v *= g.item());
                        Tensor::vector(p)
                    });
                }
            }
        }
        Ok(out)
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, make: impl FnOnce() -> Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let t = make();
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&t),
            slot @ None => *slot = Some(t),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn hadamard(a: &Tensor, b: &Tensor) -> Tensor {
    zip_map(a, b, |x, y| x * y)
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    xs.iter_mut().for_each(|x| *x /= total);
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Central-difference gradient of `loss_fn` with respect to every scalar in
/// `params`: `(f(θ+ε) − f(θ−ε)) / 2ε`.
///
/// `loss_fn` is evaluated twice at the unperturbed point first; if the two
/// values differ the oracle is rejected.
pub fn finite_difference_gradient<F>(
    mut loss_fn: F,
    params: &ParamStore,
    epsilon: f64,
) -> Result<BTreeMap<String, Tensor>>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let first = loss_fn(params)?;
    let second = loss_fn(params)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::OracleInvalid { first, second });
    }
    let mut work = params.clone();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    let mut out = BTreeMap::new();
    for name in names {
        let n = work.get(&name)?.len();
        let mut grad = Tensor::zeros(work.get(&name)?.shape());
        for i in 0..n {
            let orig = work.get(&name)?.data()[i];
            work.get_mut(&name)?.data_mut()[i] = orig + epsilon;
            let plus = loss_fn(&work)?;
            work.get_mut(&name)?.data_mut()[i] = orig - epsilon;
            let minus = loss_fn(&work)?;
            work.get_mut(&name)?.data_mut()[i] = orig;
            grad.data_mut()[i] = (plus - minus) / (2.0 * epsilon);
        }
        out.insert(name, grad);
    }
    Ok(out)
}

/// Symmetric relative error `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
