use rand::Rng as _;

use crate::corpus::{EmbeddingTable, Vocab};
use crate::nn::{Ctx, NnError, ParamId, ParamKind, ParamStore, Rng, Scalar, Tensor, Var};

/// Lookup table over the word vocabulary. Rows of words present in a
/// pretrained table are copied from it; the rest, unk included, are drawn
/// uniformly from ±0.1.
#[derive(Clone, Copy, Debug)]
pub struct WordEmbedding {
    pub table: ParamId,
    pub rows: usize,
    pub dim: usize,
}

impl WordEmbedding {
    pub fn new<F: Scalar>(
        store: &mut ParamStore<F>,
        name: &str,
        words: &Vocab,
        pretrained: Option<&EmbeddingTable>,
        dim: usize,
        trainable: bool,
        rng: &mut Rng,
    ) -> Result<Self, NnError> {
        let dim = pretrained.map_or(dim, |t| t.dim);
        let rows = words.len();
        let mut data = Vec::with_capacity(rows * dim);
        for id in 0..rows as u32 {
            let known = (id as usize >= words.reserved())
                .then(|| pretrained.and_then(|t| t.get(words.symbol(id).unwrap_or_default())))
                .flatten();
            match known {
                Some(v) => data.extend(v.iter().map(|&x| F::from_f64_lossy(x as f64))),
                None if id == Vocab::PAD => data.extend(std::iter::repeat_n(F::zero(), dim)),
                None => data.extend((0..dim).map(|_| F::from_f64_lossy(rng.gen_range(-0.1..0.1)))),
            }
        }
        let table = store.add(name, Tensor::new(vec![rows, dim], data), ParamKind::Weight)?;
        store.get_mut(table).frozen = !trainable;
        Ok(WordEmbedding { table, rows, dim })
    }

    pub fn bind<F: Scalar>(store: &ParamStore<F>, name: &str) -> Result<Self, NnError> {
        let table = crate::nn::lookup(store, name)?;
        let shape = store.get(table).value.shape().to_vec();
        Ok(WordEmbedding { table, rows: shape[0], dim: shape[1] })
    }

    /// `[ids × dim]` rows.
    pub fn forward<F: Scalar>(&self, ctx: &mut Ctx<'_, F>, ids: &[u32]) -> Result<Var, NnError> {
        if let Some(&bad) = ids.iter().find(|&&i| i as usize >= self.rows) {
            return Err(NnError::Index(format!("word id {bad} outside table of {} rows", self.rows)));
        }
        let table = ctx.param(self.table);
        ctx.graph.gather(table, ids.iter().map(|&i| Some(i as usize)).collect())
    }
}
