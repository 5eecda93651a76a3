use serde::{Deserialize, Serialize};

use super::params::{ParamKind, ParamStore};
use super::tensor::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adaptive moment estimation. Moments are kept per parameter and only
/// trainable (weight, unfrozen) parameters are touched.
#[derive(Clone, Debug)]
pub struct Adam<F> {
    pub config: AdamConfig,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
    steps: Vec<u64>,
}

impl<F: Scalar> Adam<F> {
    pub fn new(config: AdamConfig) -> Self {
        Adam { config, m: Vec::new(), v: Vec::new(), steps: Vec::new() }
    }

    /// Applies one update from the accumulated gradients, scaled by
    /// `lr_scale`, then zeroes all gradients.
    pub fn step(&mut self, store: &mut ParamStore<F>, lr_scale: f64) {
        let n = store.len();
        if self.m.len() < n {
            self.m.resize(n, Vec::new());
            self.v.resize(n, Vec::new());
            self.steps.resize(n, 0);
        }
        let c = &self.config;
        let (b1, b2) = (F::from_f64_lossy(c.beta1), F::from_f64_lossy(c.beta2));
        let eps = F::from_f64_lossy(c.eps);
        for (i, p) in store.iter_mut().enumerate() {
            if !p.trainable() {
                continue;
            }
            if self.m[i].len() != p.value.len() {
                self.m[i] = vec![F::zero(); p.value.len()];
                self.v[i] = vec![F::zero(); p.value.len()];
            }
            // Frozen phases do not advance a parameter's bias correction.
            self.steps[i] += 1;
            let t = self.steps[i] as i32;
            let lr = c.lr * lr_scale * (1.0 - c.beta2.powi(t)).sqrt() / (1.0 - c.beta1.powi(t));
            let lr = F::from_f64_lossy(lr);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (((w, &g), m), v) in p.value.data_mut().iter_mut().zip(&p.grad).zip(m).zip(v) {
                *m = b1 * *m + (F::one() - b1) * g;
                *v = b2 * *v + (F::one() - b2) * g * g;
                *w = *w - lr * *m / (v.sqrt() + eps);
            }
        }
        store.zero_grads();
    }
}

/// Rescales trainable gradients so their joint L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm<F: Scalar>(store: &mut ParamStore<F>, max_norm: f64) -> f64 {
    let mut sq = 0.0f64;
    for (_, p) in store.iter() {
        if p.kind == ParamKind::Weight && !p.frozen {
            sq += p.grad.iter().map(|g| g.to_f64().unwrap().powi(2)).sum::<f64>();
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = F::from_f64_lossy(max_norm / norm);
        for p in store.iter_mut() {
            p.grad.iter_mut().for_each(|g| *g = *g * s);
        }
    }
    norm
}
