//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Every operation appends a node holding its output value and whatever it
//! needs for the backward pass. Node indices are a topological order by
//! construction, so `backward` is a single reverse sweep.

use std::collections::HashMap;

use super::params::{ParamId, ParamStore};
use super::tensor::{Scalar, Tensor};
use super::NnError;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    None,
    Relu,
    Tanh,
    Sigmoid,
}

/// Operation with a hand-written backward pass, for structured losses that
/// are cheaper to differentiate as a unit.
pub trait CustomOp<F: Scalar> {
    fn name(&self) -> &'static str;

    /// Accumulate `out_grad` (gradient wrt the op output) into `input_grads`,
    /// one buffer per input, each sized like the corresponding input value.
    fn backward(&self, inputs: &[&Tensor<F>], out_grad: &[F], input_grads: &mut [&mut [F]]);
}

enum Op<F: Scalar> {
    Leaf,
    MatMul { a: Var, b: Var, a_t: bool, b_t: bool, m: usize, k: usize, n: usize },
    AddBias { x: Var, bias: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, factor: F },
    Act { x: Var, act: Activation },
    MulConst { x: Var, mask: Vec<F> },
    Gather { table: Var, ids: Vec<Option<usize>> },
    Reshape { x: Var },
    ConcatCols { parts: Vec<Var> },
    SliceCols { x: Var, start: usize },
    SliceRows { x: Var, start: usize },
    GatherRows { sources: Vec<Option<(Var, usize)>> },
    SelectRows { new: Var, old: Var, keep_new: Vec<bool> },
    Sum { x: Var },
    WeightedSum { terms: Vec<(Var, F)> },
    SoftmaxCrossEntropy { logits: Var, targets: Vec<Option<usize>>, probs: Vec<F>, norm: F },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<F>, inv_std: Vec<F>, batch_stats: bool },
    Custom { inputs: Vec<Var>, op: Box<dyn CustomOp<F>> },
}

impl<F: Scalar> Op<F> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul { .. } => "matmul",
            Op::AddBias { .. } => "add_bias",
            Op::Add { .. } => "add",
            Op::Sub { .. } => "sub",
            Op::Mul { .. } => "mul",
            Op::Scale { .. } => "scale",
            Op::Act { .. } => "activation",
            Op::MulConst { .. } => "mul_const",
            Op::Gather { .. } => "gather",
            Op::Reshape { .. } => "reshape",
            Op::ConcatCols { .. } => "concat_cols",
            Op::SliceCols { .. } => "slice_cols",
            Op::SliceRows { .. } => "slice_rows",
            Op::GatherRows { .. } => "gather_rows",
            Op::SelectRows { .. } => "select_rows",
            Op::Sum { .. } => "sum",
            Op::WeightedSum { .. } => "weighted_sum",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
            Op::BatchNorm { .. } => "batch_norm",
            Op::Custom { op, .. } => op.name(),
        }
    }
}

struct Node<F: Scalar> {
    value: Tensor<F>,
    op: Op<F>,
    needs_grad: bool,
}

/// Batch statistics produced by a training-mode batch norm, used by the
/// caller to update running averages.
#[derive(Clone, Debug)]
pub struct BatchStats<F> {
    pub mean: Vec<F>,
    pub var: Vec<F>,
    pub count: usize,
}

pub struct Graph<F: Scalar> {
    nodes: Vec<Node<F>>,
    grads: Vec<Option<Vec<F>>>,
    bound: HashMap<ParamId, Var>,
    non_finite: Option<(usize, &'static str)>,
    backward_done: bool,
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
            bound: HashMap::new(),
            non_finite: None,
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, needs_grad: bool) -> Var {
        if self.non_finite.is_none() && !value.is_finite() {
            self.non_finite = Some((self.nodes.len(), op.name()));
        }
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Leaf that receives a gradient.
    pub fn leaf(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Binds a stored parameter as a leaf. Binding the same parameter twice
    /// returns the same node, so uses accumulate into one gradient. Frozen
    /// parameters are bound as constants.
    pub fn param(&mut self, store: &ParamStore<F>, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let p = store.get(id);
        let v = self.push(p.value.clone(), Op::Leaf, p.trainable());
        self.bound.insert(id, v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` loss wrt `v`; `None` before backward
    /// or when `v` does not influence the loss.
    pub fn grad(&self, v: Var) -> Option<&[F]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.needs(v)
    }

    /// Clears gradients so `backward` may run again.
    pub fn reset_grads(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    /// Ok unless some node produced a NaN or infinity.
    pub fn check_finite(&self) -> Result<(), NnError> {
        match self.non_finite {
            Some((node, op)) => Err(NnError::NonFinite { node, op }),
            None => Ok(()),
        }
    }

    // ---- linear algebra -------------------------------------------------

    /// `a·b`, both matrices.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.matmul_impl(a, false, b, false)
    }

    /// `a·bᵀ`, the affine-layer product `x·Wᵀ` with `W: [out × in]`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.matmul_impl(a, false, b, true)
    }

    fn matmul_impl(&mut self, a: Var, a_t: bool, b: Var, b_t: bool) -> Result<Var, NnError> {
        let (ar, ac) = mat_dims(self.value(a));
        let (br, bc) = mat_dims(self.value(b));
        let (m, k) = if a_t { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if b_t { (bc, br) } else { (br, bc) };
        if k != k2 {
            return Err(NnError::Shape(format!(
                "matmul inner dims {k} vs {k2} ({:?} x {:?})",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut out = vec![F::zero(); m * n];
        F::gemm(m, k, n, self.value(a).data(), a_t, self.value(b).data(), b_t, &mut out, F::zero());
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(
            Tensor::new(vec![m, n], out),
            Op::MatMul { a, b, a_t, b_t, m, k, n },
            ng,
        ))
    }

    /// Adds a `[n]` bias to every row of `x: [m × n]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, NnError> {
        let xv = self.value(x);
        let n = xv.cols();
        let bv = self.value(bias);
        if bv.len() != n {
            return Err(NnError::Shape(format!("bias of {} for {n} columns", bv.len())));
        }
        let mut out = xv.data().to_vec();
        for row in out.chunks_mut(n) {
            for (o, &b) in row.iter_mut().zip(bv.data()) {
                *o = *o + b;
            }
        }
        let shape = xv.shape().to_vec();
        let ng = self.needs(x) || self.needs(bias);
        Ok(self.push(Tensor::new(shape, out), Op::AddBias { x, bias }, ng))
    }

    fn zip_same(&self, a: Var, b: Var, f: impl Fn(F, F) -> F) -> Result<Tensor<F>, NnError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(NnError::Shape(format!(
                "elementwise {:?} vs {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(Tensor::new(av.shape().to_vec(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let t = self.zip_same(a, b, |x, y| x + y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Add { a, b }, ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let t = self.zip_same(a, b, |x, y| x - y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Sub { a, b }, ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let t = self.zip_same(a, b, |x, y| x * y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Mul { a, b }, ng))
    }

    pub fn scale(&mut self, x: Var, factor: F) -> Var {
        let xv = self.value(x);
        let t = Tensor::new(xv.shape().to_vec(), xv.data().iter().map(|&v| v * factor).collect());
        let ng = self.needs(x);
        self.push(t, Op::Scale { x, factor }, ng)
    }

    pub fn activation(&mut self, x: Var, act: Activation) -> Var {
        if act == Activation::None {
            return x;
        }
        let xv = self.value(x);
        let f = |v: F| match act {
            Activation::None => v,
            Activation::Relu => v.max(F::zero()),
            Activation::Tanh => v.tanh(),
            Activation::Sigmoid => sigmoid(v),
        };
        let t = Tensor::new(xv.shape().to_vec(), xv.data().iter().map(|&v| f(v)).collect());
        let ng = self.needs(x);
        self.push(t, Op::Act { x, act }, ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Tanh)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    /// Elementwise product with a constant of the same shape.
    pub fn mul_const(&mut self, x: Var, mask: Vec<F>) -> Result<Var, NnError> {
        let xv = self.value(x);
        if mask.len() != xv.len() {
            return Err(NnError::Shape(format!("mask of {} for {} values", mask.len(), xv.len())));
        }
        let data = xv.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let t = Tensor::new(xv.shape().to_vec(), data);
        let ng = self.needs(x);
        Ok(self.push(t, Op::MulConst { x, mask }, ng))
    }

    // ---- indexing / layout ---------------------------------------------

    /// Row lookup into `table: [rows × d]`; `None` yields a zero row.
    pub fn gather(&mut self, table: Var, ids: Vec<Option<usize>>) -> Result<Var, NnError> {
        let tv = self.value(table);
        let (rows, d) = mat_dims(tv);
        let mut out = Vec::with_capacity(ids.len() * d);
        for id in &ids {
            match *id {
                Some(i) if i >= rows => {
                    return Err(NnError::Index(format!("row {i} of a {rows}-row table")))
                }
                Some(i) => out.extend_from_slice(tv.row(i)),
                None => out.extend(std::iter::repeat_n(F::zero(), d)),
            }
        }
        let t = Tensor::new(vec![ids.len(), d], out);
        let ng = self.needs(table);
        Ok(self.push(t, Op::Gather { table, ids }, ng))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var, NnError> {
        let xv = self.value(x);
        if shape.iter().product::<usize>() != xv.len() {
            return Err(NnError::Shape(format!("reshape {:?} to {shape:?}", xv.shape())));
        }
        let t = xv.clone().reshape(shape);
        let ng = self.needs(x);
        Ok(self.push(t, Op::Reshape { x }, ng))
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        if parts.is_empty() {
            return Err(NnError::Shape("concat of nothing".into()));
        }
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let rows = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(NnError::Shape("concat_cols with unequal row counts".into()));
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            Tensor::new(vec![rows, total], out),
            Op::ConcatCols { parts: parts.to_vec() },
            ng,
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NnError> {
        let xv = self.value(x);
        let (rows, cols) = mat_dims(xv);
        if start + len > cols {
            return Err(NnError::Shape(format!("columns {start}..{} of {cols}", start + len)));
        }
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&xv.row(r)[start..start + len]);
        }
        let ng = self.needs(x);
        Ok(self.push(Tensor::new(vec![rows, len], out), Op::SliceCols { x, start }, ng))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NnError> {
        let xv = self.value(x);
        let (rows, cols) = mat_dims(xv);
        if start + len > rows {
            return Err(NnError::Shape(format!("rows {start}..{} of {rows}", start + len)));
        }
        let out = xv.data()[start * cols..(start + len) * cols].to_vec();
        let ng = self.needs(x);
        Ok(self.push(Tensor::new(vec![len, cols], out), Op::SliceRows { x, start }, ng))
    }

    /// Builds a matrix whose row `i` is row `sources[i].1` of `sources[i].0`,
    /// or zeros for `None`. All sources must share a column count.
    pub fn gather_rows(&mut self, sources: Vec<Option<(Var, usize)>>, cols: usize) -> Result<Var, NnError> {
        let mut out = Vec::with_capacity(sources.len() * cols);
        let mut ng = false;
        for s in &sources {
            match *s {
                Some((v, r)) => {
                    let val = self.value(v);
                    if val.cols() != cols || r >= val.rows() {
                        return Err(NnError::Shape(format!(
                            "gather_rows row {r} of {:?} into width {cols}",
                            val.shape()
                        )));
                    }
                    out.extend_from_slice(val.row(r));
                    ng |= self.needs(v);
                }
                None => out.extend(std::iter::repeat_n(F::zero(), cols)),
            }
        }
        let t = Tensor::new(vec![sources.len(), cols], out);
        Ok(self.push(t, Op::GatherRows { sources }, ng))
    }

    /// Row-wise choice: row `r` comes from `new` where `keep_new[r]`, else
    /// from `old`.
    pub fn select_rows(&mut self, new: Var, old: Var, keep_new: Vec<bool>) -> Result<Var, NnError> {
        let (nv, ov) = (self.value(new), self.value(old));
        if nv.shape() != ov.shape() || keep_new.len() != nv.rows() {
            return Err(NnError::Shape(format!(
                "select_rows {:?} vs {:?} with {} flags",
                nv.shape(),
                ov.shape(),
                keep_new.len()
            )));
        }
        if keep_new.iter().all(|&k| k) {
            return Ok(new);
        }
        let cols = nv.cols();
        let mut out = Vec::with_capacity(nv.len());
        for (r, &k) in keep_new.iter().enumerate() {
            out.extend_from_slice(if k { nv.row(r) } else { ov.row(r) });
        }
        let t = Tensor::new(nv.shape().to_vec(), out);
        debug_assert_eq!(t.cols(), cols);
        let ng = self.needs(new) || self.needs(old);
        Ok(self.push(t, Op::SelectRows { new, old, keep_new }, ng))
    }

    // ---- reductions / losses ------------------------------------------

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        let ng = self.needs(x);
        self.push(Tensor::scalar(s), Op::Sum { x }, ng)
    }

    /// `Σ wᵢ·xᵢ` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: Vec<(Var, F)>) -> Result<Var, NnError> {
        let mut s = F::zero();
        for &(v, w) in &terms {
            let val = self.value(v);
            if val.len() != 1 {
                return Err(NnError::Shape(format!("weighted_sum term of shape {:?}", val.shape())));
            }
            s = s + w * val.item();
        }
        let ng = terms.iter().any(|&(v, _)| self.needs(v));
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum { terms }, ng))
    }

    /// Cross-entropy of row-wise softmax. Rows with `None` targets are
    /// skipped; the sum is divided by `norm` (use the count of targeted rows
    /// for a mean). Returns the scalar loss node; probabilities are
    /// available through [`Graph::softmax_probs`].
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: Vec<Option<usize>>,
        norm: F,
    ) -> Result<Var, NnError> {
        let lv = self.value(logits);
        let (rows, classes) = mat_dims(lv);
        if targets.len() != rows {
            return Err(NnError::Shape(format!("{} targets for {rows} rows", targets.len())));
        }
        let mut probs = vec![F::zero(); rows * classes];
        let mut loss = F::zero();
        for r in 0..rows {
            let row = lv.row(r);
            let pr = &mut probs[r * classes..(r + 1) * classes];
            let lse = log_softmax_into(row, pr);
            if let Some(t) = targets[r] {
                if t >= classes {
                    return Err(NnError::Index(format!("target {t} with {classes} classes")));
                }
                loss = loss + (lse - row[t]);
            }
        }
        let loss = if norm > F::zero() { loss / norm } else { loss };
        let ng = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy { logits, targets, probs, norm },
            ng,
        ))
    }

    /// Row-wise softmax probabilities saved by a cross-entropy node.
    pub fn softmax_probs(&self, loss: Var) -> Option<&[F]> {
        match &self.nodes[loss.0].op {
            Op::SoftmaxCrossEntropy { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Batch normalization of `x: [rows × features]`. With `running =
    /// None` the rows' own statistics are used and returned; otherwise the
    /// given `(mean, var)` are used.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: Option<(&[F], &[F])>,
        eps: F,
    ) -> Result<(Var, Option<BatchStats<F>>), NnError> {
        let xv = self.value(x);
        let (rows, f) = mat_dims(xv);
        if self.value(gamma).len() != f || self.value(beta).len() != f {
            return Err(NnError::Shape(format!("batch norm params for {f} features")));
        }
        let (mean, var, stats) = match running {
            Some((m, v)) => {
                if m.len() != f || v.len() != f {
                    return Err(NnError::Shape("running statistics width".into()));
                }
                (m.to_vec(), v.to_vec(), None)
            }
            None => {
                if rows < 2 {
                    return Err(NnError::BatchTooSmall(rows));
                }
                let n = F::from_usize(rows).unwrap();
                let mut mean = vec![F::zero(); f];
                for r in 0..rows {
                    for (m, &v) in mean.iter_mut().zip(xv.row(r)) {
                        *m = *m + v;
                    }
                }
                mean.iter_mut().for_each(|m| *m = *m / n);
                let mut var = vec![F::zero(); f];
                for r in 0..rows {
                    for ((s, &v), &m) in var.iter_mut().zip(xv.row(r)).zip(&mean) {
                        *s = *s + (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s = *s / n);
                let stats = BatchStats { mean: mean.clone(), var: var.clone(), count: rows };
                (mean, var, Some(stats))
            }
        };
        let inv_std: Vec<F> = var.iter().map(|&v| F::one() / (v + eps).sqrt()).collect();
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let mut xhat = vec![F::zero(); rows * f];
        let mut out = vec![F::zero(); rows * f];
        for r in 0..rows {
            for j in 0..f {
                let h = (xv.row(r)[j] - mean[j]) * inv_std[j];
                xhat[r * f + j] = h;
                out[r * f + j] = gv[j] * h + bv[j];
            }
        }
        let shape = xv.shape().to_vec();
        let ng = self.needs(x) || self.needs(gamma) || self.needs(beta);
        let v = self.push(
            Tensor::new(shape, out),
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats: running.is_none() },
            ng,
        );
        Ok((v, stats))
    }

    /// Appends a node computed outside the graph, with `op` providing the
    /// backward pass.
    pub fn custom(&mut self, inputs: Vec<Var>, value: Tensor<F>, op: Box<dyn CustomOp<F>>) -> Var {
        let ng = inputs.iter().any(|&v| self.needs(v));
        self.push(value, Op::Custom { inputs, op }, ng)
    }

    // ---- backward -------------------------------------------------------

    /// Populates gradients of the scalar `loss` wrt every node that
    /// influences it.
    pub fn backward(&mut self, loss: Var) -> Result<(), NnError> {
        if self.backward_done {
            return Err(NnError::DoubleBackward);
        }
        self.check_finite()?;
        if self.value(loss).len() != 1 {
            return Err(NnError::NonScalarLoss(self.value(loss).shape().to_vec()));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(vec![F::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else { continue };
            self.backprop_node(i, &g);
            self.grads[i] = Some(g);
        }
        self.backward_done = true;
        for g in self.grads.iter().flatten() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite { node: loss.0, op: "backward" });
            }
        }
        Ok(())
    }

    fn backprop_node(&mut self, i: usize, g: &[F]) {
        // The op is moved out so the node values can be read while the
        // input gradients are mutated.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            &Op::MatMul { a, b, a_t, b_t, m, k, n } => {
                if let Some(ga) = acc(&self.nodes, &mut self.grads, a) {
                    let bv = self.nodes[b.0].value.data();
                    if a_t {
                        // stored a is [k × m]: dA = op(B)·dCᵀ
                        F::gemm(k, n, m, bv, b_t, g, true, ga, F::one());
                    } else {
                        // dA = dC·op(B)ᵀ
                        F::gemm(m, n, k, g, false, bv, !b_t, ga, F::one());
                    }
                }
                if let Some(gb) = acc(&self.nodes, &mut self.grads, b) {
                    let av = self.nodes[a.0].value.data();
                    if b_t {
                        // stored b is [n × k]: dB = dCᵀ·op(A)
                        F::gemm(n, m, k, g, true, av, a_t, gb, F::one());
                    } else {
                        // dB = op(A)ᵀ·dC
                        F::gemm(k, m, n, av, !a_t, g, false, gb, F::one());
                    }
                }
            }
            &Op::AddBias { x, bias } => {
                if let Some(gx) = acc(&self.nodes, &mut self.grads, x) {
                    add_into(gx, g);
                }
                if let Some(gb) = acc(&self.nodes, &mut self.grads, bias) {
                    let n = gb.len();
                    for row in g.chunks(n) {
                        add_into(gb, row);
                    }
                }
            }
            &Op::Add { a, b } => {
                if let Some(ga) = acc(&self.nodes, &mut self.grads, a) {
                    add_into(ga, g);
                }
                if let Some(gb) = acc(&self.nodes, &mut self.grads, b) {
                    add_into(gb, g);
                }
            }
            &Op::Sub { a, b } => {
                if let Some(ga) = acc(&self.nodes, &mut self.grads, a) {
                    add_into(ga, g);
                }
                if let Some(gb) = acc(&self.nodes, &mut self.grads, b) {
                    for (o, &v) in gb.iter_mut().zip(g) {
                        *o = *o - v;
                    }
                }
            }
            &Op::Mul { a, b } => {
                if let Some(ga) = acc(&self.nodes, &mut self.grads, a) {
                    let bv = self.nodes[b.0].value.data();
                    for ((o, &gi), &bi) in ga.iter_mut().zip(g).zip(bv) {
                        *o = *o + gi * bi;
                    }
                }
                if let Some(gb) = acc(&self.nodes, &mut self.grads, b) {
                    let av = self.nodes[a.0].value.data();
                    for ((o, &gi), &ai) in gb.iter_mut().zip(g).zip(av) {
                        *o = *o + gi * ai;
                    }
                }
            }
            &Op::Scale { x, factor } => {
                if let Some(gx) = acc(&self.nodes, &mut self.grads, x) {
                    for (o, &v) in gx.iter_mut().zip(g) {
                        *o = *o + v * factor;
                    }
                }
            }
            &Op::Act { x, act } => {
                if let Some(gx) = acc(&self.nodes, &mut self.grads, x) {
                    let yd = self.nodes[i].value.data();
                    let xin = self.nodes[x.0].value.data();
                    for (j, o) in gx.iter_mut().enumerate() {
                        let d = match act {
                            Activation::None => F::one(),
                            Activation::Relu => {
                                if xin[j] > F::zero() {
                                    F::one()
                                } else {
                                    F::zero()
                                }
                            }
                            Activation::Tanh => F::one() - yd[j] * yd[j],
                            Activation::Sigmoid => yd[j] * (F::one() - yd[j]),
                        };
                        *o = *o + g[j] * d;
                    }
                }
            }
            Op::MulConst { x, mask } => {
                if let Some(gx) = acc(&self.nodes, &mut self.grads, *x) {
                    for ((o, &gi), &m) in gx.iter_mut().zip(g).zip(mask) {
                        *o = *o + gi * m;
                    }
                }
            }
            Op::Gather { table, ids } => {
                let d = mat_dims(&self.nodes[table.0].value).1;
                if let Some(gt) = acc(&self.nodes, &mut self.grads, *table) {
                    for (r, id) in ids.iter().enumerate() {
                        if let Some(id) = *id {
                            add_into(&mut gt[id * d..(id + 1) * d], &g[r * d..(r + 1) * d]);
                        }
                    }
                }
            }
            &Op::Reshape { x } => {
                if let Some(gx) = acc(&self.nodes, &mut self.grads, x) {
                    add_into(gx, g);
                }
            }
            Op::ConcatCols { parts } => {
                let widths: Vec<usize> = parts.iter().map(|p| self.nodes[p.0].value.cols()).collect();
                let total: usize = widths.iter().sum();
                let mut off = 0;
                for (&p, &w) in parts.iter().zip(&widths) {
                    if let Some(gp) = acc(&self.nodes, &mut self.grads, p) {
                        for (r, row) in gp.chunks_mut(w).enumerate() {
                            add_into(row, &g[r * total + off..r * total + off + w]);
                        }
                    }
                    off += w;
                }
            }
            &Op::SliceCols { x, start } => {
                let cols = self.nodes[x.0].value.cols();
                let len = self.nodes[i].value.cols();
                if let Some(gx) = acc(&self.nodes, &mut self.grads, x) {
                    for (r, row) in gx.chunks_mut(cols).enumerate() {
                        add_into(&mut row[start..start + len], &g[r * len..(r + 1) * len]);
                    }
                }
            }
            &Op::SliceRows { x, start } => {
                let cols = self.nodes[x.0].value.cols();
                if let Some(gx) = acc(&self.nodes, &mut self.grads, x) {
                    add_into(&mut gx[start * cols..start * cols + g.len()], g);
                }
            }
            Op::GatherRows { sources } => {
                let cols = self.nodes[i].value.cols();
                for (r, s) in sources.iter().enumerate() {
                    if let Some((v, row)) = *s {
                        if let Some(gv) = acc(&self.nodes, &mut self.grads, v) {
                            add_into(&mut gv[row * cols..(row + 1) * cols], &g[r * cols..(r + 1) * cols]);
                        }
                    }
                }
            }
            Op::SelectRows { new, old, keep_new } => {
                let cols = self.nodes[i].value.cols();
                for (target, want) in [(*new, true), (*old, false)] {
                    if let Some(gt) = acc(&self.nodes, &mut self.grads, target) {
                        for (r, &k) in keep_new.iter().enumerate() {
                            if k == want {
                                add_into(&mut gt[r * cols..(r + 1) * cols], &g[r * cols..(r + 1) * cols]);
                            }
                        }
                    }
                }
            }
            &Op::Sum { x } => {
                if let Some(gx) = acc(&self.nodes, &mut self.grads, x) {
                    for o in gx.iter_mut() {
                        *o = *o + g[0];
                    }
                }
            }
            Op::WeightedSum { terms } => {
                for &(v, w) in terms {
                    if let Some(gv) = acc(&self.nodes, &mut self.grads, v) {
                        gv[0] = gv[0] + g[0] * w;
                    }
                }
            }
            Op::SoftmaxCrossEntropy { logits, targets, probs, norm } => {
                let classes = self.nodes[logits.0].value.cols();
                let scale = if *norm > F::zero() { g[0] / *norm } else { g[0] };
                if let Some(gl) = acc(&self.nodes, &mut self.grads, *logits) {
                    for (r, t) in targets.iter().enumerate() {
                        let Some(t) = *t else { continue };
                        let row = &mut gl[r * classes..(r + 1) * classes];
                        for (c, o) in row.iter_mut().enumerate() {
                            let p = probs[r * classes + c];
                            let d = if c == t { p - F::one() } else { p };
                            *o = *o + scale * d;
                        }
                    }
                }
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats } => {
                let f = inv_std.len();
                let rows = xhat.len() / f;
                let mut sum_dy = vec![F::zero(); f];
                let mut sum_dy_xhat = vec![F::zero(); f];
                for r in 0..rows {
                    for j in 0..f {
                        let dy = g[r * f + j];
                        sum_dy[j] = sum_dy[j] + dy;
                        sum_dy_xhat[j] = sum_dy_xhat[j] + dy * xhat[r * f + j];
                    }
                }
                if let Some(gg) = acc(&self.nodes, &mut self.grads, *gamma) {
                    add_into(gg, &sum_dy_xhat);
                }
                if let Some(gb) = acc(&self.nodes, &mut self.grads, *beta) {
                    add_into(gb, &sum_dy);
                }
                if let Some(gx) = acc(&self.nodes, &mut self.grads, *x) {
                    let gam = self.nodes[gamma.0].value.data();
                    let n = F::from_usize(rows).unwrap();
                    for r in 0..rows {
                        for j in 0..f {
                            let dy = g[r * f + j];
                            let d = if *batch_stats {
                                gam[j] * inv_std[j] / n
                                    * (n * dy - sum_dy[j] - xhat[r * f + j] * sum_dy_xhat[j])
                            } else {
                                gam[j] * inv_std[j] * dy
                            };
                            gx[r * f + j] = gx[r * f + j] + d;
                        }
                    }
                }
            }
            Op::Custom { inputs, op: custom } => {
                let mut bufs: Vec<Vec<F>> =
                    inputs.iter().map(|v| vec![F::zero(); self.nodes[v.0].value.len()]).collect();
                {
                    let values: Vec<&Tensor<F>> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
                    let mut refs: Vec<&mut [F]> = bufs.iter_mut().map(|b| b.as_mut_slice()).collect();
                    custom.backward(&values, g, &mut refs);
                }
                for (&v, b) in inputs.iter().zip(&bufs) {
                    if let Some(gv) = acc(&self.nodes, &mut self.grads, v) {
                        add_into(gv, b);
                    }
                }
            }
        }
        self.nodes[i].op = op;
    }

    /// Gradients of every bound trainable parameter, after `backward`.
    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, &[F])> {
        self.bound
            .iter()
            .filter_map(move |(&id, &v)| self.grad(v).map(|g| (id, g)))
    }

    /// Adds bound parameter gradients into the store's accumulators.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore<F>) {
        for (id, g) in self.param_grads() {
            let p = store.get_mut(id);
            add_into(&mut p.grad, g);
        }
    }
}

pub fn sigmoid<F: Scalar>(v: F) -> F {
    if v >= F::zero() {
        F::one() / (F::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (F::one() + e)
    }
}

/// Writes `log_softmax(row)` exponentiated (probabilities) into `probs` and
/// returns the log-sum-exp of `row`.
pub fn log_softmax_into<F: Scalar>(row: &[F], probs: &mut [F]) -> F {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let mut s = F::zero();
    for (p, &v) in probs.iter_mut().zip(row) {
        *p = (v - max).exp();
        s = s + *p;
    }
    for p in probs.iter_mut() {
        *p = *p / s;
    }
    max + s.ln()
}

pub fn log_sum_exp<F: Scalar>(vals: &[F]) -> F {
    let max = vals.iter().copied().fold(F::neg_infinity(), F::max);
    if max == F::neg_infinity() {
        return max;
    }
    max + vals.iter().map(|&v| (v - max).exp()).sum::<F>().ln()
}

/// Gradient accumulator for node `v`, allocated on first use; `None` if `v`
/// needs no gradient.
fn acc<'a, F: Scalar>(nodes: &[Node<F>], grads: &'a mut [Option<Vec<F>>], v: Var) -> Option<&'a mut Vec<F>> {
    if !nodes[v.0].needs_grad {
        return None;
    }
    let n = nodes[v.0].value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![F::zero(); n]))
}

fn add_into<F: Scalar>(dst: &mut [F], src: &[F]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

fn mat_dims<F: Scalar>(t: &Tensor<F>) -> (usize, usize) {
    (t.rows(), t.cols())
}
