use rand::Rng as _;

use super::graph::{Activation, BatchStats, Graph, Var};
use super::params::{glorot_uniform, ParamId, ParamKind, ParamStore};
use super::tensor::{Scalar, Tensor};
use super::{NnError, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// State of one forward pass: the graph being built, read access to the
/// parameters, and the randomness used by dropout. Batch norm running
/// statistics are not written here; their updates are queued in
/// `bn_updates` and applied by the trainer after the step.
pub struct Ctx<'a, F: Scalar> {
    pub graph: Graph<F>,
    pub store: &'a ParamStore<F>,
    pub mode: Mode,
    rng: Option<&'a mut Rng>,
    pub bn_updates: Vec<(BatchNorm, BatchStats<F>)>,
}

impl<'a, F: Scalar> Ctx<'a, F> {
    pub fn train(store: &'a ParamStore<F>, rng: &'a mut Rng) -> Self {
        Ctx { graph: Graph::new(), store, mode: Mode::Train, rng: Some(rng), bn_updates: Vec::new() }
    }

    pub fn eval(store: &'a ParamStore<F>) -> Self {
        Ctx { graph: Graph::new(), store, mode: Mode::Eval, rng: None, bn_updates: Vec::new() }
    }

    /// Eval-mode context that continues an existing graph.
    pub fn eval_on(graph: Graph<F>, store: &'a ParamStore<F>) -> Self {
        Ctx { graph, store, mode: Mode::Eval, rng: None, bn_updates: Vec::new() }
    }

    pub fn is_train(&self) -> bool {
        self.mode == Mode::Train
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.graph.param(self.store, id)
    }

    /// Inverted dropout; identity in eval mode or at rate 0.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Result<Var, NnError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NnError::DropoutRate(rate));
        }
        if self.mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let n = self.graph.value(x).len();
        let rng = self.rng.as_deref_mut().expect("train context has an rng");
        let mask = dropout_mask::<F>(n, rate, rng);
        self.graph.mul_const(x, mask)
    }

    /// Applies queued batch norm statistic updates to `store`.
    pub fn apply_bn_updates(updates: Vec<(BatchNorm, BatchStats<F>)>, store: &mut ParamStore<F>) {
        for (bn, stats) in updates {
            bn.update_running(store, &stats);
        }
    }
}

/// Keep-mask for inverted dropout: zero with probability `rate`, otherwise
/// `1/(1-rate)`.
pub fn dropout_mask<F: Scalar>(n: usize, rate: f64, rng: &mut Rng) -> Vec<F> {
    let keep = F::from_f64_lossy(1.0 / (1.0 - rate));
    (0..n)
        .map(|_| if rng.gen::<f64>() < rate { F::zero() } else { keep })
        .collect()
}

/// `act(x·Wᵀ + b)` for `x: [batch × in]`, `W: [out × in]`, `b: [out]`.
pub fn dense_forward<F: Scalar>(
    g: &mut Graph<F>,
    x: Var,
    weight: Var,
    bias: Var,
    act: Activation,
) -> Result<Var, NnError> {
    let y = g.matmul_t(x, weight)?;
    let y = g.add_bias(y, bias)?;
    Ok(g.activation(y, act))
}

#[derive(Clone, Copy, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub activation: Activation,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new<F: Scalar>(
        store: &mut ParamStore<F>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Result<Self, NnError> {
        let weight = store.add(format!("{name}.weight"), glorot_uniform(out_dim, in_dim, rng), ParamKind::Weight)?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(vec![out_dim]), ParamKind::Weight)?;
        Ok(Dense { weight, bias, activation, in_dim, out_dim })
    }

    /// Re-attaches to parameters already present in `store`.
    pub fn bind<F: Scalar>(store: &ParamStore<F>, name: &str, activation: Activation) -> Result<Self, NnError> {
        let weight = lookup(store, &format!("{name}.weight"))?;
        let bias = lookup(store, &format!("{name}.bias"))?;
        let shape = store.get(weight).value.shape().to_vec();
        Ok(Dense { weight, bias, activation, in_dim: shape[1], out_dim: shape[0] })
    }

    pub fn forward<F: Scalar>(&self, ctx: &mut Ctx<'_, F>, x: Var) -> Result<Var, NnError> {
        let w = ctx.param(self.weight);
        let b = ctx.param(self.bias);
        dense_forward(&mut ctx.graph, x, w, b, self.activation)
    }
}

pub(crate) fn lookup<F: Scalar>(store: &ParamStore<F>, name: &str) -> Result<ParamId, NnError> {
    store.id(name).ok_or_else(|| NnError::Invalid(format!("missing parameter `{name}`")))
}

/// LSTM weights with the four gates stacked along the output dimension in
/// the order input, forget, cell candidate, output.
#[derive(Clone, Copy, Debug)]
pub struct Lstm {
    /// `[4·hidden × input]`
    pub input_weights: ParamId,
    /// `[4·hidden × hidden]`
    pub recurrent_weights: ParamId,
    /// `[4·hidden]`
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<F: Scalar>(
        store: &mut ParamStore<F>,
        name: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Result<Self, NnError> {
        // Glorot per gate block, so each gate sees the fan of one matrix.
        let mut wi = Vec::with_capacity(4 * hidden * input_dim);
        let mut wr = Vec::with_capacity(4 * hidden * hidden);
        for _ in 0..4 {
            wi.extend(glorot_uniform::<F>(hidden, input_dim, rng).into_data());
            wr.extend(glorot_uniform::<F>(hidden, hidden, rng).into_data());
        }
        let mut bias = vec![F::zero(); 4 * hidden];
        bias[hidden..2 * hidden].iter_mut().for_each(|b| *b = F::one());
        let input_weights =
            store.add(format!("{name}.input_weights"), Tensor::new(vec![4 * hidden, input_dim], wi), ParamKind::Weight)?;
        let recurrent_weights =
            store.add(format!("{name}.recurrent_weights"), Tensor::new(vec![4 * hidden, hidden], wr), ParamKind::Weight)?;
        let bias = store.add(format!("{name}.bias"), Tensor::vector(bias), ParamKind::Weight)?;
        Ok(Lstm { input_weights, recurrent_weights, bias, input_dim, hidden })
    }

    pub fn bind<F: Scalar>(store: &ParamStore<F>, name: &str) -> Result<Self, NnError> {
        let input_weights = lookup(store, &format!("{name}.input_weights"))?;
        let recurrent_weights = lookup(store, &format!("{name}.recurrent_weights"))?;
        let bias = lookup(store, &format!("{name}.bias"))?;
        let shape = store.get(input_weights).value.shape().to_vec();
        Ok(Lstm { input_weights, recurrent_weights, bias, input_dim: shape[1], hidden: shape[0] / 4 })
    }

    /// One step for a batch: `x: [batch × input]`, `h, c: [batch × hidden]`.
    pub fn step<F: Scalar>(&self, ctx: &mut Ctx<'_, F>, x: Var, h: Var, c: Var) -> Result<(Var, Var), NnError> {
        let wi = ctx.param(self.input_weights);
        let b = ctx.param(self.bias);
        let wr = ctx.param(self.recurrent_weights);
        let gx = ctx.graph.matmul_t(x, wi)?;
        let gx = ctx.graph.add_bias(gx, b)?;
        lstm_cell(&mut ctx.graph, gx, h, c, wr, self.hidden)
    }

    /// Runs over a time-major batch `x: [steps·batch × input]` (row
    /// `t·batch + i` is sequence `i` at step `t`). Sequence `i` is active
    /// for steps `< lengths[i]`; inactive steps carry the previous state
    /// through unchanged, which for a reverse pass means the zero initial
    /// state. Returns the hidden state after every step, `[batch × hidden]`
    /// each, in step order.
    pub fn run<F: Scalar>(
        &self,
        ctx: &mut Ctx<'_, F>,
        x: Var,
        lengths: &[usize],
        reverse: bool,
    ) -> Result<Vec<Var>, NnError> {
        let batch = lengths.len();
        let steps = lengths.iter().copied().max().unwrap_or(0);
        if batch == 0 || steps == 0 {
            return Err(NnError::EmptySequence);
        }
        if ctx.graph.value(x).rows() != steps * batch {
            return Err(NnError::Shape(format!(
                "time-major input has {} rows, expected {steps}x{batch}",
                ctx.graph.value(x).rows()
            )));
        }
        let wi = ctx.param(self.input_weights);
        let b = ctx.param(self.bias);
        let wr = ctx.param(self.recurrent_weights);
        let gx_all = ctx.graph.matmul_t(x, wi)?;
        let gx_all = ctx.graph.add_bias(gx_all, b)?;
        let zeros = ctx.graph.constant(Tensor::zeros(vec![batch, self.hidden]));
        let (mut h, mut c) = (zeros, zeros);
        let mut out = vec![zeros; steps];
        let order: Vec<usize> = if reverse { (0..steps).rev().collect() } else { (0..steps).collect() };
        for t in order {
            let gx = ctx.graph.slice_rows(gx_all, t * batch, batch)?;
            let (h2, c2) = lstm_cell(&mut ctx.graph, gx, h, c, wr, self.hidden)?;
            let active: Vec<bool> = lengths.iter().map(|&l| t < l).collect();
            h = ctx.graph.select_rows(h2, h, active.clone())?;
            c = ctx.graph.select_rows(c2, c, active)?;
            out[t] = h;
        }
        Ok(out)
    }
}

/// LSTM cell update given the input contribution `gx = x·Wᵢᵀ + b`
/// (`[batch × 4·hidden]`):
/// `i, f, o = σ(·)`, `g = tanh(·)`, `c' = f⊙c + i⊙g`, `h' = o⊙tanh(c')`.
pub fn lstm_cell<F: Scalar>(
    g: &mut Graph<F>,
    gx: Var,
    h: Var,
    c: Var,
    recurrent: Var,
    hidden: usize,
) -> Result<(Var, Var), NnError> {
    let gh = g.matmul_t(h, recurrent)?;
    let gates = g.add(gx, gh)?;
    let i = g.slice_cols(gates, 0, hidden)?;
    let f = g.slice_cols(gates, hidden, hidden)?;
    let cand = g.slice_cols(gates, 2 * hidden, hidden)?;
    let o = g.slice_cols(gates, 3 * hidden, hidden)?;
    let i = g.sigmoid(i);
    let f = g.sigmoid(f);
    let cand = g.tanh(cand);
    let o = g.sigmoid(o);
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c2 = g.add(keep, write)?;
    let tc = g.tanh(c2);
    let h2 = g.mul(o, tc)?;
    Ok((h2, c2))
}

#[derive(Clone, Copy, Debug)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

/// Per-step states of both directions, `[batch × hidden]` each.
#[derive(Clone, Debug)]
pub struct BiLstmOutput {
    pub fwd: Vec<Var>,
    pub bwd: Vec<Var>,
}

impl BiLstm {
    pub fn new<F: Scalar>(
        store: &mut ParamStore<F>,
        name: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Result<Self, NnError> {
        Ok(BiLstm {
            fwd: Lstm::new(store, &format!("{name}.fwd"), input_dim, hidden, rng)?,
            bwd: Lstm::new(store, &format!("{name}.bwd"), input_dim, hidden, rng)?,
        })
    }

    pub fn bind<F: Scalar>(store: &ParamStore<F>, name: &str) -> Result<Self, NnError> {
        Ok(BiLstm { fwd: Lstm::bind(store, &format!("{name}.fwd"))?, bwd: Lstm::bind(store, &format!("{name}.bwd"))? })
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden
    }

    /// Masked time-major batch; see [`Lstm::run`].
    pub fn run<F: Scalar>(&self, ctx: &mut Ctx<'_, F>, x: Var, lengths: &[usize]) -> Result<BiLstmOutput, NnError> {
        let fwd = self.fwd.run(ctx, x, lengths, false)?;
        let bwd = self.bwd.run(ctx, x, lengths, true)?;
        Ok(BiLstmOutput { fwd, bwd })
    }

    /// Single sequence `xs: [T × input]`. Returns `(fwd [T × H], bwd [T × H],
    /// concat [T × 2H])`.
    pub fn forward_sequence<F: Scalar>(&self, ctx: &mut Ctx<'_, F>, xs: Var) -> Result<(Var, Var, Var), NnError> {
        let steps = ctx.graph.value(xs).rows();
        if steps == 0 {
            return Err(NnError::EmptySequence);
        }
        let out = self.run(ctx, xs, &[steps])?;
        let h = self.hidden();
        let fwd = ctx.graph.gather_rows(out.fwd.iter().map(|&v| Some((v, 0))).collect(), h)?;
        let bwd = ctx.graph.gather_rows(out.bwd.iter().map(|&v| Some((v, 0))).collect(), h)?;
        let concat = ctx.graph.concat_cols(&[fwd, bwd])?;
        Ok((fwd, bwd, concat))
    }
}

/// Batch normalization with learned scale/shift and running statistics
/// stored as buffers.
#[derive(Clone, Copy, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub const MOMENTUM: f64 = 0.9;
    pub const EPS: f64 = 1e-5;

    pub fn new<F: Scalar>(store: &mut ParamStore<F>, name: &str, features: usize) -> Result<Self, NnError> {
        let gamma = store.add(format!("{name}.gamma"), Tensor::full(vec![features], F::one()), ParamKind::Weight)?;
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(vec![features]), ParamKind::Weight)?;
        let running_mean = store.add(format!("{name}.running_mean"), Tensor::zeros(vec![features]), ParamKind::Buffer)?;
        let running_var =
            store.add(format!("{name}.running_var"), Tensor::full(vec![features], F::one()), ParamKind::Buffer)?;
        Ok(BatchNorm { gamma, beta, running_mean, running_var, momentum: Self::MOMENTUM, eps: Self::EPS })
    }

    pub fn bind<F: Scalar>(store: &ParamStore<F>, name: &str) -> Result<Self, NnError> {
        Ok(BatchNorm {
            gamma: lookup(store, &format!("{name}.gamma"))?,
            beta: lookup(store, &format!("{name}.beta"))?,
            running_mean: lookup(store, &format!("{name}.running_mean"))?,
            running_var: lookup(store, &format!("{name}.running_var"))?,
            momentum: Self::MOMENTUM,
            eps: Self::EPS,
        })
    }

    /// Train mode normalizes with the statistics of the rows of `x` and
    /// queues a running-statistics update on `ctx`; eval mode, or a frozen
    /// layer, uses the running statistics and queues nothing.
    pub fn forward<F: Scalar>(&self, ctx: &mut Ctx<'_, F>, x: Var) -> Result<Var, NnError> {
        let frozen = ctx.store.get(self.gamma).frozen;
        let gamma = ctx.param(self.gamma);
        let beta = ctx.param(self.beta);
        let eps = F::from_f64_lossy(self.eps);
        if ctx.is_train() && !frozen {
            let (y, stats) = ctx.graph.batch_norm(x, gamma, beta, None, eps)?;
            ctx.bn_updates.push((*self, stats.expect("batch statistics in train mode")));
            Ok(y)
        } else {
            self.forward_running(ctx, x)
        }
    }

    /// Normalizes with the running statistics regardless of mode.
    pub fn forward_running<F: Scalar>(&self, ctx: &mut Ctx<'_, F>, x: Var) -> Result<Var, NnError> {
        let gamma = ctx.param(self.gamma);
        let beta = ctx.param(self.beta);
        let eps = F::from_f64_lossy(self.eps);
        let store = ctx.store;
        let mean = store.get(self.running_mean).value.data();
        let var = store.get(self.running_var).value.data();
        Ok(ctx.graph.batch_norm(x, gamma, beta, Some((mean, var)), eps)?.0)
    }

    /// `running ← momentum·running + (1−momentum)·batch`, with the unbiased
    /// batch variance.
    pub fn update_running<F: Scalar>(&self, store: &mut ParamStore<F>, stats: &BatchStats<F>) {
        let m = F::from_f64_lossy(self.momentum);
        let one_m = F::one() - m;
        let n = stats.count as f64;
        let unbias = F::from_f64_lossy(if n > 1.0 { n / (n - 1.0) } else { 1.0 });
        for (r, &b) in store.get_mut(self.running_mean).value.data_mut().iter_mut().zip(&stats.mean) {
            *r = m * *r + one_m * b;
        }
        for (r, &b) in store.get_mut(self.running_var).value.data_mut().iter_mut().zip(&stats.var) {
            *r = m * *r + one_m * b * unbias;
        }
    }
}
