use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) u32);

impl TensorId {
    fn idx(self) -> usize {
        self.0 as usize
    }
}

/// Primitive operations the tape can record and replay in reverse.
#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Matmul(TensorId, TensorId),
    Transpose(TensorId),
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Hadamard(TensorId, TensorId),
    Scale(TensorId, f64),
    AddScalar(TensorId, f64),
    Sigmoid(TensorId),
    Tanh(TensorId),
    Relu(TensorId),
    Ln(TensorId),
    SoftmaxRows(TensorId),
    LogSoftmaxRows(TensorId),
    ConcatCols(Vec<TensorId>),
    StackRows(Vec<TensorId>),
    SelectRows(TensorId, Vec<usize>),
    SelectCols(TensorId, Vec<usize>),
    TileRows(TensorId),
    Pick(TensorId, usize),
    Sum(TensorId),
}

struct Node<F> {
    tensor: Tensor<F>,
    op: Op,
    // True when a grad-requiring leaf is reachable below this node.
    needs: bool,
}

/// Wengert list: ops are recorded in execution order during the forward
/// pass and replayed in reverse by [`Tape::backward`]. A tape and its
/// tensors belong to one episode on one thread; parameters are copied in
/// at bind time and their gradients exported afterwards.
pub struct Tape<F: Scalar> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, tensor: Tensor<F>, op: Op, needs: bool) -> TensorId {
        let id = TensorId(self.nodes.len() as u32);
        self.nodes.push(Node { tensor, op, needs });
        id
    }

    fn needs(&self, id: TensorId) -> bool {
        self.nodes[id.idx()].needs
    }

    pub fn value(&self, id: TensorId) -> &Tensor<F> {
        &self.nodes[id.idx()].tensor
    }

    pub fn data(&self, id: TensorId) -> &[F] {
        &self.nodes[id.idx()].tensor.data
    }

    pub fn scalar_value(&self, id: TensorId) -> F {
        debug_assert!(self.value(id).is_scalar());
        self.data(id)[0]
    }

    pub fn grad(&self, id: TensorId) -> Option<&[F]> {
        self.nodes[id.idx()].tensor.grad.as_deref()
    }

    // ---- leaf constructors -------------------------------------------------

    /// Constant input; no gradient flows into it.
    pub fn input(&mut self, t: Tensor<F>) -> TensorId {
        self.push(t, Op::Leaf, false)
    }

    /// Learnable leaf; receives gradient on backward.
    pub fn param(&mut self, mut t: Tensor<F>) -> TensorId {
        t.requires_grad = true;
        self.push(t, Op::Leaf, true)
    }

    pub fn constant_row(&mut self, data: Vec<F>) -> TensorId {
        self.input(Tensor::row(data))
    }

    pub fn constant_matrix(&mut self, rows: usize, cols: usize, data: Vec<F>) -> TensorId {
        self.input(Tensor::matrix(rows, cols, data))
    }

    pub fn constant_scalar(&mut self, x: F) -> TensorId {
        self.input(Tensor::scalar(x))
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> TensorId {
        self.input(Tensor::zeros(rows, cols))
    }

    /// Copy of the value with the history severed (stop-gradient).
    pub fn detach(&mut self, id: TensorId) -> TensorId {
        let t = self.value(id);
        let copy = Tensor::new(t.shape.clone(), t.data.clone());
        self.input(copy)
    }

    // ---- ops ---------------------------------------------------------------

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: ta.shape.clone(),
                right: tb.shape.clone(),
            });
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![F::zero(); m * n];
        F::gemm(m, k, n, &ta.data, false, &tb.data, false, &mut out, false);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::matrix(m, n, out), Op::Matmul(a, b), needs))
    }

    pub fn transpose(&mut self, a: TensorId) -> TensorId {
        let t = self.value(a);
        let (r, c) = (t.rows(), t.cols());
        let mut out = vec![F::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = t.data[i * c + j];
            }
        }
        let needs = self.needs(a);
        self.push(Tensor::matrix(c, r, out), Op::Transpose(a), needs)
    }

    fn elementwise_pair(
        &mut self,
        op: &'static str,
        a: TensorId,
        b: TensorId,
        f: impl Fn(F, F) -> F,
        make: impl Fn(TensorId, TensorId) -> Op,
    ) -> Result<TensorId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape != tb.shape {
            return Err(Error::ShapeMismatch {
                op,
                left: ta.shape.clone(),
                right: tb.shape.clone(),
            });
        }
        let data: Vec<F> = ta
            .data
            .iter()
            .zip(&tb.data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = ta.shape.clone();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(shape, data), make(a, b), needs))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.elementwise_pair("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.elementwise_pair("sub", a, b, |x, y| x - y, Op::Sub)
    }

    /// Entrywise (Hadamard) product.
    pub fn hadamard(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.elementwise_pair("hadamard", a, b, |x, y| x * y, Op::Hadamard)
    }

    pub fn scale(&mut self, a: TensorId, c: f64) -> TensorId {
        let fc = F::of(c);
        let t = self.value(a);
        let data: Vec<F> = t.data.iter().map(|&x| x * fc).collect();
        let shape = t.shape.clone();
        let needs = self.needs(a);
        self.push(Tensor::new(shape, data), Op::Scale(a, c), needs)
    }

    pub fn add_scalar(&mut self, a: TensorId, c: f64) -> TensorId {
        let fc = F::of(c);
        let t = self.value(a);
        let data: Vec<F> = t.data.iter().map(|&x| x + fc).collect();
        let shape = t.shape.clone();
        let needs = self.needs(a);
        self.push(Tensor::new(shape, data), Op::AddScalar(a, c), needs)
    }

    /// `1 - a`, entrywise.
    pub fn one_minus(&mut self, a: TensorId) -> TensorId {
        let neg = self.scale(a, -1.0);
        self.add_scalar(neg, 1.0)
    }

    fn check_finite(&self, op: &'static str, a: TensorId) -> Result<()> {
        if self.data(a).iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericDomain(op));
        }
        Ok(())
    }

    fn unary(
        &mut self,
        a: TensorId,
        f: impl Fn(F) -> F,
        make: impl Fn(TensorId) -> Op,
    ) -> TensorId {
        let t = self.value(a);
        let data: Vec<F> = t.data.iter().map(|&x| f(x)).collect();
        let shape = t.shape.clone();
        let needs = self.needs(a);
        self.push(Tensor::new(shape, data), make(a), needs)
    }

    pub fn sigmoid(&mut self, a: TensorId) -> Result<TensorId> {
        self.check_finite("sigmoid", a)?;
        Ok(self.unary(a, |x| F::one() / (F::one() + (-x).exp()), Op::Sigmoid))
    }

    pub fn tanh(&mut self, a: TensorId) -> Result<TensorId> {
        self.check_finite("tanh", a)?;
        Ok(self.unary(a, |x| x.tanh(), Op::Tanh))
    }

    pub fn relu(&mut self, a: TensorId) -> Result<TensorId> {
        self.check_finite("relu", a)?;
        Ok(self.unary(a, |x| if x > F::zero() { x } else { F::zero() }, Op::Relu))
    }

    /// Natural log; defined for strictly positive inputs.
    pub fn ln(&mut self, a: TensorId) -> Result<TensorId> {
        if self.data(a).iter().any(|x| !x.is_finite() || *x <= F::zero()) {
            return Err(Error::NumericDomain("ln"));
        }
        Ok(self.unary(a, |x| x.ln(), Op::Ln))
    }

    /// Softmax over the last axis, max-subtracted for stability.
    pub fn softmax_rows(&mut self, a: TensorId) -> Result<TensorId> {
        self.check_finite("softmax", a)?;
        let t = self.value(a);
        let (r, c) = (t.rows(), t.cols());
        let mut data = vec![F::zero(); r * c];
        for i in 0..r {
            let row = t.row_slice(i);
            let m = row.iter().cloned().fold(F::neg_infinity(), F::max);
            let mut sum = F::zero();
            for j in 0..c {
                let e = (row[j] - m).exp();
                data[i * c + j] = e;
                sum += e;
            }
            for j in 0..c {
                data[i * c + j] = data[i * c + j] / sum;
            }
        }
        let needs = self.needs(a);
        Ok(self.push(Tensor::matrix(r, c, data), Op::SoftmaxRows(a), needs))
    }

    /// Log-softmax over the last axis; use for log-probabilities rather
    /// than composing `ln(softmax(x))`, which underflows.
    pub fn log_softmax_rows(&mut self, a: TensorId) -> Result<TensorId> {
        self.check_finite("log_softmax", a)?;
        let t = self.value(a);
        let (r, c) = (t.rows(), t.cols());
        let mut data = vec![F::zero(); r * c];
        for i in 0..r {
            let row = t.row_slice(i);
            let m = row.iter().cloned().fold(F::neg_infinity(), F::max);
            let mut sum = F::zero();
            for j in 0..c {
                sum += (row[j] - m).exp();
            }
            let lse = m + sum.ln();
            for j in 0..c {
                data[i * c + j] = row[j] - lse;
            }
        }
        let needs = self.needs(a);
        Ok(self.push(Tensor::matrix(r, c, data), Op::LogSoftmaxRows(a), needs))
    }

    /// Concatenate along columns; all inputs must share a row count.
    pub fn concat_cols(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::contract("concat of zero tensors"));
        }
        let r = self.value(parts[0]).rows();
        let mut total = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != r {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    left: self.value(parts[0]).shape.clone(),
                    right: t.shape.clone(),
                });
            }
            total += t.cols();
        }
        let mut data = vec![F::zero(); r * total];
        for i in 0..r {
            let mut off = 0;
            for &p in parts {
                let t = self.value(p);
                let c = t.cols();
                data[i * total + off..i * total + off + c].copy_from_slice(t.row_slice(i));
                off += c;
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            Tensor::matrix(r, total, data),
            Op::ConcatCols(parts.to_vec()),
            needs,
        ))
    }

    /// Stack 1×c rows into an n×c matrix.
    pub fn stack_rows(&mut self, rows: &[TensorId]) -> Result<TensorId> {
        if rows.is_empty() {
            return Err(Error::contract("stack of zero rows"));
        }
        let c = self.value(rows[0]).cols();
        for &rid in rows {
            let t = self.value(rid);
            if t.rows() != 1 || t.cols() != c {
                return Err(Error::ShapeMismatch {
                    op: "stack_rows",
                    left: vec![1, c],
                    right: t.shape.clone(),
                });
            }
        }
        let mut data = Vec::with_capacity(rows.len() * c);
        for &rid in rows {
            data.extend_from_slice(&self.value(rid).data);
        }
        let needs = rows.iter().any(|&p| self.needs(p));
        Ok(self.push(
            Tensor::matrix(rows.len(), c, data),
            Op::StackRows(rows.to_vec()),
            needs,
        ))
    }

    pub fn select_rows(&mut self, a: TensorId, indices: &[usize]) -> Result<TensorId> {
        let t = self.value(a);
        let (r, c) = (t.rows(), t.cols());
        if indices.iter().any(|&i| i >= r) {
            return Err(Error::contract(format!(
                "select_rows index out of range (rows = {r})"
            )));
        }
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            data.extend_from_slice(t.row_slice(i));
        }
        let needs = self.needs(a);
        Ok(self.push(
            Tensor::matrix(indices.len(), c, data),
            Op::SelectRows(a, indices.to_vec()),
            needs,
        ))
    }

    pub fn select_cols(&mut self, a: TensorId, indices: &[usize]) -> Result<TensorId> {
        let t = self.value(a);
        let (r, c) = (t.rows(), t.cols());
        if indices.iter().any(|&j| j >= c) {
            return Err(Error::contract(format!(
                "select_cols index out of range (cols = {c})"
            )));
        }
        let mut data = Vec::with_capacity(indices.len() * r);
        for i in 0..r {
            for &j in indices {
                data.push(t.at(i, j));
            }
        }
        let needs = self.needs(a);
        Ok(self.push(
            Tensor::matrix(r, indices.len(), data),
            Op::SelectCols(a, indices.to_vec()),
            needs,
        ))
    }

    /// Repeat the rows of `a` cyclically until `n_rows` rows.
    pub fn tile_rows(&mut self, a: TensorId, n_rows: usize) -> Result<TensorId> {
        let t = self.value(a);
        let (r, c) = (t.rows(), t.cols());
        if r == 0 || n_rows == 0 {
            return Err(Error::contract("tile_rows on empty tensor"));
        }
        let mut data = Vec::with_capacity(n_rows * c);
        for i in 0..n_rows {
            data.extend_from_slice(t.row_slice(i % r));
        }
        let needs = self.needs(a);
        Ok(self.push(Tensor::matrix(n_rows, c, data), Op::TileRows(a), needs))
    }

    /// Extract one entry (by flat index) as a 1×1 tensor.
    pub fn pick(&mut self, a: TensorId, flat: usize) -> Result<TensorId> {
        let t = self.value(a);
        if flat >= t.len() {
            return Err(Error::contract(format!(
                "pick index {flat} out of range (len = {})",
                t.len()
            )));
        }
        let v = t.data[flat];
        let needs = self.needs(a);
        Ok(self.push(Tensor::scalar(v), Op::Pick(a, flat), needs))
    }

    /// Sum of all entries as a 1×1 tensor.
    pub fn sum(&mut self, a: TensorId) -> TensorId {
        let t = self.value(a);
        let mut acc = F::zero();
        for &x in &t.data {
            acc += x;
        }
        let needs = self.needs(a);
        self.push(Tensor::scalar(acc), Op::Sum(a), needs)
    }

    /// Mean of the rows of `a` as a 1×c row (constant 1/n weights).
    pub fn mean_rows(&mut self, a: TensorId) -> Result<TensorId> {
        let r = self.value(a).rows();
        let w = self.constant_row(vec![F::of(1.0 / r as f64); r]);
        self.matmul(w, a)
    }

    // ---- reverse pass ------------------------------------------------------

    /// Accumulate `contrib` into the grad buffer of `id` (if it needs grad).
    fn accumulate(&mut self, id: TensorId, contrib: &[F]) {
        let node = &mut self.nodes[id.idx()];
        if !node.needs {
            return;
        }
        let g = node.tensor.grad_mut();
        debug_assert_eq!(g.len(), contrib.len());
        for (gi, &ci) in g.iter_mut().zip(contrib) {
            *gi += ci;
        }
    }

    /// Reverse replay from a scalar loss. Gradients accumulate: calling
    /// twice without a fresh tape doubles every reachable gradient.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape
            )));
        }
        {
            let g = self.nodes[loss.idx()].tensor.grad_mut();
            g[0] += F::one();
        }
        for i in (0..=loss.idx()).rev() {
            if !self.nodes[i].needs {
                continue;
            }
            let gout = match self.nodes[i].tensor.grad.take() {
                Some(g) => g,
                None => continue,
            };
            let op = self.nodes[i].op.clone();
            self.propagate(i, &op, &gout)?;
            self.nodes[i].tensor.grad = Some(gout);
        }
        Ok(())
    }

    fn propagate(&mut self, node_idx: usize, op: &Op, gout: &[F]) -> Result<()> {
        match op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (ta, tb) = (&self.nodes[a.idx()].tensor, &self.nodes[b.idx()].tensor);
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.needs(*a) {
                    // dA = dC · Bᵀ
                    let mut da = vec![F::zero(); m * k];
                    F::gemm(m, n, k, gout, false, &self.nodes[b.idx()].tensor.data, true, &mut da, false);
                    self.accumulate(*a, &da);
                }
                if self.needs(*b) {
                    // dB = Aᵀ · dC
                    let mut db = vec![F::zero(); k * n];
                    F::gemm(k, m, n, &self.nodes[a.idx()].tensor.data, true, gout, false, &mut db, false);
                    self.accumulate(*b, &db);
                }
            }
            Op::Transpose(a) => {
                let t = &self.nodes[a.idx()].tensor;
                let (r, c) = (t.rows(), t.cols());
                let mut da = vec![F::zero(); r * c];
                for i in 0..r {
                    for j in 0..c {
                        da[i * c + j] = gout[j * r + i];
                    }
                }
                self.accumulate(*a, &da);
            }
            Op::Add(a, b) => {
                self.accumulate(*a, gout);
                self.accumulate(*b, gout);
            }
            Op::Sub(a, b) => {
                self.accumulate(*a, gout);
                let neg: Vec<F> = gout.iter().map(|&g| -g).collect();
                self.accumulate(*b, &neg);
            }
            Op::Hadamard(a, b) => {
                if self.needs(*a) {
                    let da: Vec<F> = gout
                        .iter()
                        .zip(&self.nodes[b.idx()].tensor.data)
                        .map(|(&g, &y)| g * y)
                        .collect();
                    self.accumulate(*a, &da);
                }
                if self.needs(*b) {
                    let db: Vec<F> = gout
                        .iter()
                        .zip(&self.nodes[a.idx()].tensor.data)
                        .map(|(&g, &x)| g * x)
                        .collect();
                    self.accumulate(*b, &db);
                }
            }
            Op::Scale(a, c) => {
                let fc = F::of(*c);
                let da: Vec<F> = gout.iter().map(|&g| g * fc).collect();
                self.accumulate(*a, &da);
            }
            Op::AddScalar(a, _) => {
                self.accumulate(*a, gout);
            }
            Op::Sigmoid(a) => {
                let y = &self.nodes[node_idx].tensor.data;
                let da: Vec<F> = gout
                    .iter()
                    .zip(y)
                    .map(|(&g, &yi)| g * yi * (F::one() - yi))
                    .collect();
                self.accumulate(*a, &da);
            }
            Op::Tanh(a) => {
                let y = &self.nodes[node_idx].tensor.data;
                let da: Vec<F> = gout
                    .iter()
                    .zip(y)
                    .map(|(&g, &yi)| g * (F::one() - yi * yi))
                    .collect();
                self.accumulate(*a, &da);
            }
            Op::Relu(a) => {
                let x = &self.nodes[a.idx()].tensor.data;
                let da: Vec<F> = gout
                    .iter()
                    .zip(x)
                    .map(|(&g, &xi)| if xi > F::zero() { g } else { F::zero() })
                    .collect();
                self.accumulate(*a, &da);
            }
            Op::Ln(a) => {
                let x = &self.nodes[a.idx()].tensor.data;
                let da: Vec<F> = gout.iter().zip(x).map(|(&g, &xi)| g / xi).collect();
                self.accumulate(*a, &da);
            }
            Op::SoftmaxRows(a) => {
                let y = &self.nodes[node_idx].tensor;
                let (r, c) = (y.rows(), y.cols());
                let mut da = vec![F::zero(); r * c];
                for i in 0..r {
                    let yr = y.row_slice(i);
                    let gr = &gout[i * c..(i + 1) * c];
                    let mut dot = F::zero();
                    for j in 0..c {
                        dot += gr[j] * yr[j];
                    }
                    for j in 0..c {
                        da[i * c + j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.accumulate(*a, &da);
            }
            Op::LogSoftmaxRows(a) => {
                let y = &self.nodes[node_idx].tensor;
                let (r, c) = (y.rows(), y.cols());
                let mut da = vec![F::zero(); r * c];
                for i in 0..r {
                    let yr = y.row_slice(i);
                    let gr = &gout[i * c..(i + 1) * c];
                    let mut gsum = F::zero();
                    for j in 0..c {
                        gsum += gr[j];
                    }
                    for j in 0..c {
                        da[i * c + j] = gr[j] - yr[j].exp() * gsum;
                    }
                }
                self.accumulate(*a, &da);
            }
            Op::ConcatCols(parts) => {
                let r = self.nodes[node_idx].tensor.rows();
                let total = self.nodes[node_idx].tensor.cols();
                let widths: Vec<usize> =
                    parts.iter().map(|&p| self.value(p).cols()).collect();
                let mut off = 0;
                for (&p, &w) in parts.iter().zip(&widths) {
                    if self.needs(p) {
                        let mut dp = vec![F::zero(); r * w];
                        for i in 0..r {
                            dp[i * w..(i + 1) * w]
                                .copy_from_slice(&gout[i * total + off..i * total + off + w]);
                        }
                        self.accumulate(p, &dp);
                    }
                    off += w;
                }
            }
            Op::StackRows(rows) => {
                let c = self.nodes[node_idx].tensor.cols();
                for (i, &rid) in rows.iter().enumerate() {
                    if self.needs(rid) {
                        self.accumulate(rid, &gout[i * c..(i + 1) * c]);
                    }
                }
            }
            Op::SelectRows(a, indices) => {
                let t = &self.nodes[a.idx()].tensor;
                let (r, c) = (t.rows(), t.cols());
                let mut da = vec![F::zero(); r * c];
                for (k, &i) in indices.iter().enumerate() {
                    for j in 0..c {
                        da[i * c + j] += gout[k * c + j];
                    }
                }
                self.accumulate(*a, &da);
            }
            Op::SelectCols(a, indices) => {
                let t = &self.nodes[a.idx()].tensor;
                let (r, c) = (t.rows(), t.cols());
                let w = indices.len();
                let mut da = vec![F::zero(); r * c];
                for i in 0..r {
                    for (k, &j) in indices.iter().enumerate() {
                        da[i * c + j] += gout[i * w + k];
                    }
                }
                self.accumulate(*a, &da);
            }
            Op::TileRows(a) => {
                let t = &self.nodes[a.idx()].tensor;
                let (r, c) = (t.rows(), t.cols());
                let n = self.nodes[node_idx].tensor.rows();
                let mut da = vec![F::zero(); r * c];
                for i in 0..n {
                    let src = i % r;
                    for j in 0..c {
                        da[src * c + j] += gout[i * c + j];
                    }
                }
                self.accumulate(*a, &da);
            }
            Op::Pick(a, flat) => {
                let len = self.nodes[a.idx()].tensor.len();
                let mut da = vec![F::zero(); len];
                da[*flat] = gout[0];
                self.accumulate(*a, &da);
            }
            Op::Sum(a) => {
                let len = self.nodes[a.idx()].tensor.len();
                let da = vec![gout[0]; len];
                self.accumulate(*a, &da);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t64() -> Tape<f64> {
        Tape::new()
    }

    #[test]
    fn matmul_identity() {
        let mut tape = t64();
        let eye = tape.constant_matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let x = tape.constant_matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = tape.matmul(eye, x).unwrap();
        assert_eq!(tape.data(y), tape.data(x));
    }

    #[test]
    fn matmul_hand_example() {
        let mut tape = t64();
        let a = tape.constant_matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let b = tape.constant_matrix(2, 1, vec![0.0, 1.0]);
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.data(c), &[2.0, 4.0]);
    }

    #[test]
    fn matmul_matches_naive_triple_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let a: Vec<f64> = (0..35).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..21).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut tape = t64();
        let ta = tape.constant_matrix(5, 7, a.clone());
        let tb = tape.constant_matrix(7, 3, b.clone());
        let tc = tape.matmul(ta, tb).unwrap();
        for i in 0..5 {
            for j in 0..3 {
                let mut acc = 0.0;
                for l in 0..7 {
                    acc += a[i * 7 + l] * b[l * 3 + j];
                }
                assert!((tape.data(tc)[i * 3 + j] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let mut tape = t64();
        let a = tape.zeros(2, 3);
        let b = tape.zeros(2, 3);
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "got: {msg}");
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let mut tape = t64();
        let x = tape.constant_row(vec![0.0]);
        let y = tape.sigmoid(x).unwrap();
        assert_eq!(tape.data(y), &[0.5]);
    }

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let mut tape = t64();
        let x = tape.constant_row(vec![0.0, 0.0, 0.0]);
        let y = tape.softmax_rows(x).unwrap();
        for &v in tape.data(y) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let s: f64 = tape.data(y).iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn tanh_saturates() {
        let mut tape = t64();
        let x = tape.constant_row(vec![40.0, -40.0]);
        let y = tape.tanh(x).unwrap();
        assert!((tape.data(y)[0] - 1.0).abs() < 1e-9);
        assert!((tape.data(y)[1] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn nan_input_is_domain_error() {
        let mut tape = t64();
        let x = tape.constant_row(vec![f64::NAN]);
        assert!(matches!(
            tape.sigmoid(x),
            Err(Error::NumericDomain("sigmoid"))
        ));
        assert!(matches!(
            tape.softmax_rows(x),
            Err(Error::NumericDomain("softmax"))
        ));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = t64();
        let x = tape.zeros(2, 2);
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn backward_accumulates_on_repeat() {
        let mut tape = t64();
        let x = tape.param(Tensor::row(vec![3.0]));
        let y = tape.hadamard(x, x).unwrap(); // x^2, dy/dx = 6
        let loss = tape.sum(y);
        tape.backward(loss).unwrap();
        assert!((tape.grad(x).unwrap()[0] - 6.0).abs() < 1e-12);
        tape.backward(loss).unwrap();
        assert!((tape.grad(x).unwrap()[0] - 12.0).abs() < 1e-12);
    }

    #[test]
    fn matmul_gradients() {
        // loss = sum(A·B); dA = 1·Bᵀ summed over cols, dB likewise.
        let mut tape = t64();
        let a = tape.param(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let b = tape.param(Tensor::matrix(2, 2, vec![5.0, 6.0, 7.0, 8.0]));
        let c = tape.matmul(a, b).unwrap();
        let loss = tape.sum(c);
        tape.backward(loss).unwrap();
        // dA[i,l] = sum_j B[l,j]
        assert_eq!(tape.grad(a).unwrap(), &[11.0, 15.0, 11.0, 15.0]);
        // dB[l,j] = sum_i A[i,l]
        assert_eq!(tape.grad(b).unwrap(), &[4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn log_softmax_matches_ln_of_softmax() {
        let mut tape = t64();
        let x = tape.constant_row(vec![0.3, -1.2, 2.0, 0.0]);
        let p = tape.softmax_rows(x).unwrap();
        let lp = tape.log_softmax_rows(x).unwrap();
        for (a, b) in tape.data(p).iter().zip(tape.data(lp)) {
            assert!((a.ln() - b).abs() < 1e-12);
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        let build = || {
            let mut tape = t64();
            let x = tape.param(Tensor::row(vec![0.25, -0.5, 1.5]));
            let w = tape.param(Tensor::matrix(3, 2, vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6]));
            let h = tape.matmul(x, w).unwrap();
            let s = tape.sigmoid(h).unwrap();
            let p = tape.softmax_rows(s).unwrap();
            let lp = tape.log_softmax_rows(p).unwrap();
            let loss = tape.sum(lp);
            tape.backward(loss).unwrap();
            (
                tape.scalar_value(loss).to_bits(),
                tape.grad(x).unwrap().iter().map(|g| g.to_bits()).collect::<Vec<_>>(),
                tape.grad(w).unwrap().iter().map(|g| g.to_bits()).collect::<Vec<_>>(),
            )
        };
        assert_eq!(build(), build());
    }

    #[test]
    fn select_and_tile_gradients_scatter() {
        let mut tape = t64();
        let a = tape.param(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let tiled = tape.tile_rows(a, 5).unwrap(); // rows 0,1,0,1,0
        let loss = tape.sum(tiled);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(a).unwrap(), &[3.0, 3.0, 2.0, 2.0]);
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut tape = t64();
        let x = tape.param(Tensor::row(vec![2.0]));
        let d = tape.detach(x);
        let y = tape.hadamard(d, d).unwrap();
        let loss = tape.sum(y);
        tape.backward(loss).unwrap();
        assert!(tape.grad(x).is_none());
    }
}
