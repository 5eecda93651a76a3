//! Linear-chain CRF: forward algorithm, marginals and Viterbi, plus the
//! graph node that turns the sentence NLLs into a differentiable loss.

use crate::nn::{log_sum_exp, CustomOp, Ctx, NnError, ParamId, ParamKind, ParamStore, Scalar, Tensor, Var};

/// Score tables for `K` tags: `transitions[i·K + j]` scores tag `i`
/// followed by tag `j`.
#[derive(Clone, Copy, Debug)]
pub struct CrfScores<'a, F> {
    pub transitions: &'a [F],
    pub start: &'a [F],
    pub end: &'a [F],
    pub tags: usize,
}

impl<F: Scalar> CrfScores<'_, F> {
    /// Score of `path` over `emissions: [T × K]`.
    pub fn path_score(&self, emissions: &[F], path: &[usize]) -> F {
        let k = self.tags;
        let mut s = self.start[path[0]] + self.end[path[path.len() - 1]];
        for (t, &y) in path.iter().enumerate() {
            s = s + emissions[t * k + y];
            if t > 0 {
                s = s + self.transitions[path[t - 1] * k + y];
            }
        }
        s
    }

    /// Forward log-scores `alpha[t·K + j]`: log-sum over prefixes ending in
    /// `j` at `t`.
    fn alphas(&self, emissions: &[F], steps: usize) -> Vec<F> {
        let k = self.tags;
        let mut alpha = vec![F::zero(); steps * k];
        for j in 0..k {
            alpha[j] = self.start[j] + emissions[j];
        }
        let mut buf = vec![F::zero(); k];
        for t in 1..steps {
            for j in 0..k {
                for i in 0..k {
                    buf[i] = alpha[(t - 1) * k + i] + self.transitions[i * k + j];
                }
                alpha[t * k + j] = log_sum_exp(&buf) + emissions[t * k + j];
            }
        }
        alpha
    }

    fn betas(&self, emissions: &[F], steps: usize) -> Vec<F> {
        let k = self.tags;
        let mut beta = vec![F::zero(); steps * k];
        beta[(steps - 1) * k..].copy_from_slice(self.end);
        let mut buf = vec![F::zero(); k];
        for t in (0..steps - 1).rev() {
            for i in 0..k {
                for j in 0..k {
                    buf[j] = self.transitions[i * k + j] + emissions[(t + 1) * k + j] + beta[(t + 1) * k + j];
                }
                beta[t * k + i] = log_sum_exp(&buf);
            }
        }
        beta
    }

    /// `log Σ_paths exp(score)`.
    pub fn log_partition(&self, emissions: &[F]) -> F {
        let k = self.tags;
        let steps = emissions.len() / k;
        let alpha = self.alphas(emissions, steps);
        let last: Vec<F> = (0..k).map(|j| alpha[(steps - 1) * k + j] + self.end[j]).collect();
        log_sum_exp(&last)
    }

    /// Best path and its score. Among equal scores the lower tag id wins.
    pub fn viterbi(&self, emissions: &[F]) -> (Vec<usize>, F) {
        let k = self.tags;
        let steps = emissions.len() / k;
        let mut delta: Vec<F> = (0..k).map(|j| self.start[j] + emissions[j]).collect();
        let mut back = vec![0usize; steps * k];
        for t in 1..steps {
            let mut next = vec![F::zero(); k];
            for j in 0..k {
                let mut best = 0;
                let mut best_s = delta[0] + self.transitions[j];
                for i in 1..k {
                    let s = delta[i] + self.transitions[i * k + j];
                    if s > best_s {
                        best = i;
                        best_s = s;
                    }
                }
                back[t * k + j] = best;
                next[j] = best_s + emissions[t * k + j];
            }
            delta = next;
        }
        let mut best = 0;
        let mut best_s = delta[0] + self.end[0];
        for j in 1..k {
            let s = delta[j] + self.end[j];
            if s > best_s {
                best = j;
                best_s = s;
            }
        }
        let mut path = vec![best; steps];
        for t in (1..steps).rev() {
            path[t - 1] = back[t * k + path[t]];
        }
        (path, best_s)
    }

    /// NLL of `gold` and its gradients, accumulated into the given buffers
    /// scaled by `scale`.
    fn nll_with_grads(
        &self,
        emissions: &[F],
        gold: &[usize],
        scale: F,
        d_em: &mut [F],
        d_trans: &mut [F],
        d_start: &mut [F],
        d_end: &mut [F],
    ) -> F {
        let k = self.tags;
        let steps = gold.len();
        let alpha = self.alphas(emissions, steps);
        let beta = self.betas(emissions, steps);
        let last: Vec<F> = (0..k).map(|j| alpha[(steps - 1) * k + j] + self.end[j]).collect();
        let log_z = log_sum_exp(&last);
        for t in 0..steps {
            for j in 0..k {
                let p = (alpha[t * k + j] + beta[t * k + j] - log_z).exp();
                d_em[t * k + j] = d_em[t * k + j] + scale * p;
                if t == 0 {
                    d_start[j] = d_start[j] + scale * p;
                }
                if t == steps - 1 {
                    d_end[j] = d_end[j] + scale * p;
                }
            }
            if t > 0 {
                for i in 0..k {
                    for j in 0..k {
                        let p = (alpha[(t - 1) * k + i]
                            + self.transitions[i * k + j]
                            + emissions[t * k + j]
                            + beta[t * k + j]
                            - log_z)
                            .exp();
                        d_trans[i * k + j] = d_trans[i * k + j] + scale * p;
                    }
                }
            }
        }
        for (t, &y) in gold.iter().enumerate() {
            d_em[t * k + y] = d_em[t * k + y] - scale;
            if t > 0 {
                d_trans[gold[t - 1] * k + y] = d_trans[gold[t - 1] * k + y] - scale;
            }
        }
        d_start[gold[0]] = d_start[gold[0]] - scale;
        d_end[gold[steps - 1]] = d_end[gold[steps - 1]] - scale;
        log_z - self.path_score(emissions, gold)
    }
}

/// Loss node whose gradients were computed alongside its value.
struct CrfNll<F> {
    grads: [Vec<F>; 4],
}

impl<F: Scalar> CustomOp<F> for CrfNll<F> {
    fn name(&self) -> &'static str {
        "crf_nll"
    }

    fn backward(&self, _inputs: &[&Tensor<F>], out_grad: &[F], input_grads: &mut [&mut [F]]) {
        let g = out_grad[0];
        for (dst, src) in input_grads.iter_mut().zip(&self.grads) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = *d + g * s;
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Crf {
    pub transitions: ParamId,
    pub start: ParamId,
    pub end: ParamId,
    pub tags: usize,
}

impl Crf {
    pub const NAME: &'static str = "crf";

    pub fn new<F: Scalar>(store: &mut ParamStore<F>, tags: usize) -> Result<Self, NnError> {
        let n = Self::NAME;
        Ok(Crf {
            transitions: store.add(format!("{n}.transitions"), Tensor::zeros(vec![tags, tags]), ParamKind::Weight)?,
            start: store.add(format!("{n}.start"), Tensor::zeros(vec![tags]), ParamKind::Weight)?,
            end: store.add(format!("{n}.end"), Tensor::zeros(vec![tags]), ParamKind::Weight)?,
            tags,
        })
    }

    pub fn bind<F: Scalar>(store: &ParamStore<F>) -> Result<Self, NnError> {
        let n = Self::NAME;
        let transitions = crate::nn::lookup(store, &format!("{n}.transitions"))?;
        Ok(Crf {
            transitions,
            start: crate::nn::lookup(store, &format!("{n}.start"))?,
            end: crate::nn::lookup(store, &format!("{n}.end"))?,
            tags: store.get(transitions).value.rows(),
        })
    }

    pub fn scores<'a, F: Scalar>(&self, store: &'a ParamStore<F>) -> CrfScores<'a, F> {
        CrfScores {
            transitions: store.get(self.transitions).value.data(),
            start: store.get(self.start).value.data(),
            end: store.get(self.end).value.data(),
            tags: self.tags,
        }
    }

    /// Summed NLL of the gold paths divided by `norm`. `emissions` is the
    /// packed `[tokens × K]` matrix, sentences laid out back to back with
    /// the given lengths.
    pub fn nll<F: Scalar>(
        &self,
        ctx: &mut Ctx<'_, F>,
        emissions: Var,
        lengths: &[usize],
        gold: &[usize],
        norm: F,
    ) -> Result<Var, NnError> {
        let k = self.tags;
        let em = ctx.graph.value(emissions);
        if em.cols() != k || em.rows() != gold.len() || lengths.iter().sum::<usize>() != gold.len() {
            return Err(NnError::Shape(format!("crf emissions {:?} for {} gold tags", em.shape(), gold.len())));
        }
        if let Some(&bad) = gold.iter().find(|&&y| y >= k) {
            return Err(NnError::Index(format!("gold tag {bad} outside {k} tags")));
        }
        if !em.is_finite() {
            return Err(NnError::NonFinite { node: emissions.index(), op: "crf emissions" });
        }
        let em = em.data().to_vec();
        let inputs = [emissions, ctx.param(self.transitions), ctx.param(self.start), ctx.param(self.end)];
        let scores = self.scores(ctx.store);
        let mut d_em = vec![F::zero(); em.len()];
        let mut d_trans = vec![F::zero(); k * k];
        let mut d_start = vec![F::zero(); k];
        let mut d_end = vec![F::zero(); k];
        let scale = F::one() / norm;
        let mut total = F::zero();
        let mut off = 0;
        for &len in lengths.iter().filter(|&&l| l > 0) {
            total = total
                + scores.nll_with_grads(
                    &em[off * k..(off + len) * k],
                    &gold[off..off + len],
                    scale,
                    &mut d_em[off * k..(off + len) * k],
                    &mut d_trans,
                    &mut d_start,
                    &mut d_end,
                );
            off += len;
        }
        let op = CrfNll { grads: [d_em, d_trans, d_start, d_end] };
        Ok(ctx.graph.custom(inputs.to_vec(), Tensor::scalar(total * scale), Box::new(op)))
    }
}
