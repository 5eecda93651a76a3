use crate::corpus::Vocab;
use crate::nn::{glorot_uniform, Activation, BiLstm, Ctx, Dense, NnError, ParamId, ParamKind, ParamStore, Rng, Scalar, Var};

use super::FeatureConfig;

/// Char ids of a form, unknown characters mapped to unk.
pub fn char_ids(form: &str, chars: &Vocab) -> Vec<u32> {
    let mut buf = [0u8; 4];
    form.chars().map(|c| chars.id_or_unk(c.encode_utf8(&mut buf))).collect()
}

/// Exactly `max_len` char ids: short forms are padded with 0 in front, long
/// forms keep their last `max_len` characters.
pub fn pad_chars(form: &str, chars: &Vocab, max_len: usize) -> Vec<u32> {
    let ids = char_ids(form, chars);
    if ids.len() >= max_len {
        ids[ids.len() - max_len..].to_vec()
    } else {
        let mut out = vec![Vocab::PAD; max_len - ids.len()];
        out.extend(ids);
        out
    }
}

fn embedding_table<F: Scalar>(
    store: &mut ParamStore<F>,
    name: &str,
    rows: usize,
    dim: usize,
    rng: &mut Rng,
) -> Result<ParamId, NnError> {
    store.add(name, glorot_uniform(rows, dim, rng), ParamKind::Weight)
}

/// Char FF: the padded window's char embeddings are concatenated and passed
/// through two dense layers with dropout after each.
#[derive(Clone, Copy, Debug)]
pub struct CharFF {
    pub embeddings: ParamId,
    pub hidden: Dense,
    pub output: Dense,
    pub max_len: usize,
    pub dropout: f64,
}

impl CharFF {
    pub fn new<F: Scalar>(
        store: &mut ParamStore<F>,
        name: &str,
        char_vocab: usize,
        cfg: &FeatureConfig,
        rng: &mut Rng,
    ) -> Result<Self, NnError> {
        let embeddings = embedding_table(store, &format!("{name}.embeddings"), char_vocab, cfg.char_embed_dim, rng)?;
        let input = cfg.max_word_len * cfg.char_embed_dim;
        let hidden = Dense::new(store, &format!("{name}.hidden"), input, cfg.char_ff_hidden, Activation::Relu, rng)?;
        let output = Dense::new(
            store,
            &format!("{name}.output"),
            cfg.char_ff_hidden,
            cfg.char_ff_out,
            cfg.char_ff_out_activation,
            rng,
        )?;
        Ok(CharFF { embeddings, hidden, output, max_len: cfg.max_word_len, dropout: cfg.char_ff_dropout })
    }

    pub fn bind<F: Scalar>(store: &ParamStore<F>, name: &str, cfg: &FeatureConfig) -> Result<Self, NnError> {
        Ok(CharFF {
            embeddings: crate::nn::lookup(store, &format!("{name}.embeddings"))?,
            hidden: Dense::bind(store, &format!("{name}.hidden"), Activation::Relu)?,
            output: Dense::bind(store, &format!("{name}.output"), cfg.char_ff_out_activation)?,
            max_len: cfg.max_word_len,
            dropout: cfg.char_ff_dropout,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.output.out_dim
    }

    /// `padded: [words × max_len]` ids from [`pad_chars`]; returns
    /// `[words × out]`.
    pub fn encode<F: Scalar>(&self, ctx: &mut Ctx<'_, F>, padded: &[u32]) -> Result<Var, NnError> {
        if !padded.len().is_multiple_of(self.max_len) {
            return Err(NnError::Shape(format!("{} char ids is not a multiple of {}", padded.len(), self.max_len)));
        }
        let words = padded.len() / self.max_len;
        let table = ctx.param(self.embeddings);
        let dim = ctx.graph.value(table).cols();
        let ids = padded.iter().map(|&c| (c != Vocab::PAD).then_some(c as usize)).collect();
        let e = ctx.graph.gather(table, ids)?;
        let x = ctx.graph.reshape(e, vec![words, self.max_len * dim])?;
        let h = self.hidden.forward(ctx, x)?;
        let h = ctx.dropout(h, self.dropout)?;
        let y = self.output.forward(ctx, h)?;
        ctx.dropout(y, self.dropout)
    }
}

/// Char BiLSTM over the unpadded characters; the word vector is the last
/// forward state followed by the last backward state.
#[derive(Clone, Copy, Debug)]
pub struct CharBiLstm {
    pub embeddings: ParamId,
    pub lstm: BiLstm,
}

impl CharBiLstm {
    pub fn new<F: Scalar>(
        store: &mut ParamStore<F>,
        name: &str,
        char_vocab: usize,
        cfg: &FeatureConfig,
        rng: &mut Rng,
    ) -> Result<Self, NnError> {
        let embeddings = embedding_table(store, &format!("{name}.embeddings"), char_vocab, cfg.char_embed_dim, rng)?;
        let lstm = BiLstm::new(store, &format!("{name}.lstm"), cfg.char_embed_dim, cfg.char_bilstm_hidden, rng)?;
        Ok(CharBiLstm { embeddings, lstm })
    }

    pub fn bind<F: Scalar>(store: &ParamStore<F>, name: &str) -> Result<Self, NnError> {
        Ok(CharBiLstm {
            embeddings: crate::nn::lookup(store, &format!("{name}.embeddings"))?,
            lstm: BiLstm::bind(store, &format!("{name}.lstm"))?,
        })
    }

    pub fn out_dim(&self) -> usize {
        2 * self.lstm.hidden()
    }

    /// Encodes a batch of words at once; returns `[words × 2·hidden]`.
    pub fn encode<F: Scalar>(&self, ctx: &mut Ctx<'_, F>, words: &[Vec<u32>]) -> Result<Var, NnError> {
        if words.is_empty() || words.iter().any(Vec::is_empty) {
            return Err(NnError::EmptySequence);
        }
        let lengths: Vec<usize> = words.iter().map(Vec::len).collect();
        let steps = lengths.iter().copied().max().unwrap_or(0);
        let mut ids = Vec::with_capacity(steps * words.len());
        for t in 0..steps {
            ids.extend(words.iter().map(|w| w.get(t).map(|&c| c as usize)));
        }
        let table = ctx.param(self.embeddings);
        let x = ctx.graph.gather(table, ids)?;
        let out = self.lstm.run(ctx, x, &lengths)?;
        // Inactive steps carry state, so the last forward step holds each
        // word's final state and step 0 holds the backward one.
        let last = *out.fwd.last().expect("at least one step");
        ctx.graph.concat_cols(&[last, out.bwd[0]])
    }
}

#[derive(Clone, Copy, Debug)]
pub enum CharEncoder {
    FeedForward(CharFF),
    BiLstm(CharBiLstm),
}

impl CharEncoder {
    pub const NAME: &'static str = "char_encoder";

    pub fn out_dim(&self) -> usize {
        match self {
            CharEncoder::FeedForward(e) => e.out_dim(),
            CharEncoder::BiLstm(e) => e.out_dim(),
        }
    }

    /// `padded` feeds the feedforward variant, `seqs` the BiLSTM one.
    pub fn encode<F: Scalar>(&self, ctx: &mut Ctx<'_, F>, padded: &[u32], seqs: &[Vec<u32>]) -> Result<Var, NnError> {
        match self {
            CharEncoder::FeedForward(e) => e.encode(ctx, padded),
            CharEncoder::BiLstm(e) => e.encode(ctx, seqs),
        }
    }
}
