//! Character encoder pretraining against fixed word vectors: the encoder
//! output, mapped into the vector space, must pick out its own word under a
//! softmax whose output layer is initialized from the vectors.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingTable, Sentence, Vocab};
use crate::features::{char_ids, pad_chars, CharBiLstm, CharEncoder, CharEncoderKind, CharFF, FeatureConfig};
use crate::nn::{
    clip_global_norm, Activation, Adam, AdamConfig, Ctx, Dense, NnError, ParamId, ParamKind, ParamStore, Rng, Scalar,
    Tensor, Var,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub clip_norm: f64,
    pub output_frozen: bool,
    /// Use every word of the vector table instead of only the train words.
    pub all_embedding_words: bool,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 10,
            batch_size: 256,
            adam: AdamConfig::default(),
            clip_norm: 5.0,
            output_frozen: true,
            all_embedding_words: false,
            seed: 1,
        }
    }
}

/// Dense map into the vector space plus the softmax layer over the word
/// list.
#[derive(Clone, Copy, Debug)]
pub struct PretrainHead {
    pub map: Dense,
    /// `[words × dim]`
    pub output: ParamId,
    pub output_bias: ParamId,
}

impl PretrainHead {
    pub const NAME: &'static str = "pretrain_head";
}

/// Words to pretrain on: train forms that have a vector, in first-seen
/// order, or the whole table.
pub fn select_words(sentences: &[Sentence], table: &EmbeddingTable, all: bool) -> Vec<String> {
    if all {
        return table.words.clone();
    }
    let mut seen = std::collections::HashSet::new();
    sentences
        .iter()
        .flat_map(|s| &s.tokens)
        .filter(|t| table.row_of(&t.form).is_some() && seen.insert(t.form.clone()))
        .map(|t| t.form.clone())
        .collect()
}

#[derive(Clone, Debug)]
pub struct PretrainModel {
    pub features: FeatureConfig,
    pub chars: Vocab,
    pub encoder: CharEncoder,
    pub head: PretrainHead,
    pub words: Vec<String>,
    index: HashMap<String, usize>,
}

impl PretrainModel {
    pub fn new<F: Scalar>(
        store: &mut ParamStore<F>,
        features: &FeatureConfig,
        chars: Vocab,
        table: &EmbeddingTable,
        words: Vec<String>,
        output_frozen: bool,
        rng: &mut Rng,
    ) -> Result<Self, NnError> {
        if words.is_empty() {
            return Err(NnError::Invalid("no words to pretrain on".into()));
        }
        let encoder = match features.char_encoder {
            CharEncoderKind::FeedForward => {
                CharEncoder::FeedForward(CharFF::new(store, CharEncoder::NAME, chars.len(), features, rng)?)
            }
            CharEncoderKind::BiLstm => {
                CharEncoder::BiLstm(CharBiLstm::new(store, CharEncoder::NAME, chars.len(), features, rng)?)
            }
            CharEncoderKind::None => return Err(NnError::Invalid("pretraining needs a char encoder".into())),
        };
        Self::with_encoder(store, features, chars, encoder, table, words, output_frozen, rng)
    }

    /// Head over an encoder that already lives in `store`, e.g. the
    /// tagger's own when the objective is used as an auxiliary loss.
    #[allow(clippy::too_many_arguments)]
    pub fn with_encoder<F: Scalar>(
        store: &mut ParamStore<F>,
        features: &FeatureConfig,
        chars: Vocab,
        encoder: CharEncoder,
        table: &EmbeddingTable,
        words: Vec<String>,
        output_frozen: bool,
        rng: &mut Rng,
    ) -> Result<Self, NnError> {
        if words.is_empty() {
            return Err(NnError::Invalid("no words to pretrain on".into()));
        }
        let mut rows = Vec::with_capacity(words.len() * table.dim);
        for w in &words {
            let v = table.get(w).ok_or_else(|| NnError::Invalid(format!("word `{w}` has no vector")))?;
            rows.extend(v.iter().map(|&x| F::from_f64_lossy(x as f64)));
        }
        let name = PretrainHead::NAME;
        let map = Dense::new(store, &format!("{name}.map"), encoder.out_dim(), table.dim, Activation::None, rng)?;
        let output =
            store.add(format!("{name}.output.weight"), Tensor::new(vec![words.len(), table.dim], rows), ParamKind::Weight)?;
        let output_bias = store.add(format!("{name}.output.bias"), Tensor::zeros(vec![words.len()]), ParamKind::Weight)?;
        store.get_mut(output).frozen = output_frozen;
        store.get_mut(output_bias).frozen = output_frozen;
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Ok(PretrainModel {
            features: features.clone(),
            chars,
            encoder,
            head: PretrainHead { map, output, output_bias },
            words,
            index,
        })
    }

    pub fn word_index(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// `map(F(chars(form)))` for each form, `[forms × dim]`.
    pub fn project<F: Scalar>(&self, ctx: &mut Ctx<'_, F>, forms: &[&str]) -> Result<Var, NnError> {
        let max_len = self.features.max_word_len;
        let padded: Vec<u32> = forms.iter().flat_map(|f| pad_chars(f, &self.chars, max_len)).collect();
        let seqs: Vec<Vec<u32>> = forms.iter().map(|f| char_ids(f, &self.chars)).collect();
        let enc = self.encoder.encode(ctx, &padded, &seqs)?;
        self.head.map.forward(ctx, enc)
    }
}

/// Mean cross-entropy of `softmax(W·map(F(w̄)) + b)` against each word's own
/// index.
pub fn pretrain_loss<F: Scalar>(ctx: &mut Ctx<'_, F>, model: &PretrainModel, words: &[&str]) -> Result<Var, NnError> {
    let targets = words
        .iter()
        .map(|w| model.word_index(w).map(Some).ok_or_else(|| NnError::Invalid(format!("`{w}` is not a pretraining word"))))
        .collect::<Result<Vec<_>, _>>()?;
    let m = model.project(ctx, words)?;
    let out = ctx.param(model.head.output);
    let bias = ctx.param(model.head.output_bias);
    let logits = ctx.graph.matmul_t(m, out)?;
    let logits = ctx.graph.add_bias(logits, bias)?;
    let n = F::from_usize(words.len()).expect("batch size fits");
    ctx.graph.softmax_cross_entropy(logits, targets, n)
}

/// The pretraining objective used as an extra term of the tagger loss.
pub fn char_embedding_aux_loss<F: Scalar>(
    ctx: &mut Ctx<'_, F>,
    model: &PretrainModel,
    words: &[&str],
) -> Result<Var, NnError> {
    pretrain_loss(ctx, model, words)
}

/// Trains the encoder and map layer; returns the mean loss of every epoch.
pub fn pretrain(
    store: &mut ParamStore<f32>,
    model: &PretrainModel,
    cfg: &PretrainConfig,
    rng: &mut Rng,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>, NnError> {
    if model.words.is_empty() {
        return Err(NnError::Invalid("no words to pretrain on".into()));
    }
    let mut adam = Adam::new(cfg.adam.clone());
    let mut order: Vec<usize> = (0..model.words.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let words: Vec<&str> = chunk.iter().map(|&i| model.words[i].as_str()).collect();
            let mut ctx = Ctx::train(store, rng);
            let loss = pretrain_loss(&mut ctx, model, &words)?;
            total += ctx.graph.value(loss).item() as f64 * words.len() as f64;
            ctx.graph.backward(loss)?;
            let Ctx { graph, .. } = ctx;
            graph.accumulate_param_grads(store);
            clip_global_norm(store, cfg.clip_norm);
            adam.step(store, 1.0);
        }
        let mean = total / model.words.len() as f64;
        on_epoch(epoch, mean);
        history.push(mean);
    }
    Ok(history)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// The `k` pretraining words whose output rows are closest by cosine to the
/// mapped encoding of `form`, best first. Works for any form.
pub fn nearest_words<F: Scalar>(
    store: &ParamStore<F>,
    model: &PretrainModel,
    form: &str,
    k: usize,
) -> Result<Vec<(String, f64)>, NnError> {
    if k == 0 || form.is_empty() {
        return Ok(Vec::new());
    }
    let mut ctx = Ctx::eval(store);
    let m = model.project(&mut ctx, &[form])?;
    let query: Vec<f64> = ctx.graph.value(m).data().iter().map(|v| v.to_f64().unwrap_or(0.0)).collect();
    let out = &store.get(model.head.output).value;
    let mut scored: Vec<(usize, f64)> = (0..model.words.len())
        .map(|i| {
            let row: Vec<f64> = out.row(i).iter().map(|v| v.to_f64().unwrap_or(0.0)).collect();
            (i, cosine(&query, &row))
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().take(k).map(|(i, s)| (model.words[i].clone(), s)).collect())
}

#[cfg(test)]
mod tests;
