use std::collections::HashMap;

use rand::Rng as _;

use super::tensor::{Scalar, Tensor};
use super::{NnError, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Updated by the optimizer.
    Weight,
    /// Saved with the model but never differentiated (running statistics).
    Buffer,
}

#[derive(Clone, Debug)]
pub struct Param<F> {
    pub name: String,
    pub value: Tensor<F>,
    pub grad: Vec<F>,
    pub kind: ParamKind,
    pub frozen: bool,
}

impl<F: Scalar> Param<F> {
    pub fn trainable(&self) -> bool {
        self.kind == ParamKind::Weight && !self.frozen
    }
}

/// Named parameter tensors in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<F> {
    params: Vec<Param<F>>,
    index: HashMap<String, ParamId>,
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new(), index: HashMap::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<F>, kind: ParamKind) -> Result<ParamId, NnError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(NnError::DuplicateParam(name));
        }
        let id = ParamId(self.params.len());
        let grad = vec![F::zero(); value.len()];
        self.params.push(Param { name: name.clone(), value, grad, kind, frozen: false });
        self.index.insert(name, id);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Param<F> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<F> {
        &mut self.params[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Param<F>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<F>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<F>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = F::zero());
        }
    }

    /// Freezes or unfreezes every parameter whose name starts with `prefix`.
    /// Returns how many matched.
    pub fn set_frozen_prefix(&mut self, prefix: &str, frozen: bool) -> usize {
        let mut n = 0;
        for p in &mut self.params {
            if p.name.starts_with(prefix) {
                p.frozen = frozen;
                n += 1;
            }
        }
        n
    }

    pub fn set_frozen_all(&mut self, frozen: bool) {
        for p in &mut self.params {
            p.frozen = frozen;
        }
    }

    /// Number of scalar weights (buffers excluded).
    pub fn num_weights(&self) -> usize {
        self.params.iter().filter(|p| p.kind == ParamKind::Weight).map(|p| p.value.len()).sum()
    }
}

/// Glorot/Xavier uniform initialization for a `[fan_out × fan_in]` matrix.
pub fn glorot_uniform<F: Scalar>(fan_out: usize, fan_in: usize, rng: &mut Rng) -> Tensor<F> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_out * fan_in)
        .map(|_| F::from_f64_lossy(rng.gen_range(-limit..limit)))
        .collect();
    Tensor::new(vec![fan_out, fan_in], data)
}
