//! Sentence encoder and output heads: stacked BiLSTMs over the word
//! features, a softmax or CRF tag head, and next/previous tag and word
//! prediction heads that read one direction of the first layer each.

mod crf;

#[cfg(test)]
mod tests;

use serde::{Deserialize, Serialize};

pub use crf::{Crf, CrfScores};

use crate::corpus::{Batch, EmbeddingTable, GrammemeLexicon, Vocab, VocabConfig, Vocabs};
use crate::features::{FeatureConfig, FeatureExtractor};
use crate::nn::{Activation, BatchNorm, BiLstm, BiLstmOutput, Ctx, Dense, NnError, ParamStore, Rng, Scalar, Var};
use crate::pretrain::PretrainModel;

/// Tag ids below this are reserved (pad, bos, eos).
pub const TAG_OFFSET: u32 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaggerConfig {
    pub features: FeatureConfig,
    pub vocab: VocabConfig,
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
    pub pre_output_dim: usize,
    pub crf: bool,
    pub lambda_pos: f64,
    pub lambda_word: f64,
    pub lambda_emb: f64,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        TaggerConfig {
            features: FeatureConfig::default(),
            vocab: VocabConfig::default(),
            hidden: 128,
            layers: 2,
            dropout: 0.3,
            pre_output_dim: 100,
            crf: false,
            lambda_pos: 0.1,
            lambda_word: 0.1,
            lambda_emb: 0.0,
        }
    }
}

impl TaggerConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        self.features.validate()?;
        for (name, w) in [("lambda_pos", self.lambda_pos), ("lambda_word", self.lambda_word), ("lambda_emb", self.lambda_emb)]
        {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(NnError::Invalid(format!("{name} must be a nonnegative number, got {w}")));
            }
        }
        if self.layers == 0 || self.hidden == 0 || self.pre_output_dim == 0 {
            return Err(NnError::Invalid("encoder sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NnError::DropoutRate(self.dropout));
        }
        Ok(())
    }
}

/// Forward and backward prediction heads of one auxiliary language model.
#[derive(Clone, Copy, Debug)]
pub struct LmHeads {
    pub fwd: Dense,
    pub bwd: Dense,
}

impl LmHeads {
    fn new<F: Scalar>(store: &mut ParamStore<F>, name: &str, hidden: usize, classes: usize, rng: &mut Rng) -> Result<Self, NnError> {
        Ok(LmHeads {
            fwd: Dense::new(store, &format!("{name}.fwd"), hidden, classes, Activation::None, rng)?,
            bwd: Dense::new(store, &format!("{name}.bwd"), hidden, classes, Activation::None, rng)?,
        })
    }

    fn bind<F: Scalar>(store: &ParamStore<F>, name: &str) -> Result<Self, NnError> {
        Ok(LmHeads {
            fwd: Dense::bind(store, &format!("{name}.fwd"), Activation::None)?,
            bwd: Dense::bind(store, &format!("{name}.bwd"), Activation::None)?,
        })
    }

    /// Mean over tokens of the forward and backward cross-entropies:
    /// `fwd` states predict `next`, `bwd` states predict `prev`.
    fn loss<F: Scalar>(
        &self,
        ctx: &mut Ctx<'_, F>,
        fwd: Var,
        bwd: Var,
        next: Vec<Option<usize>>,
        prev: Vec<Option<usize>>,
    ) -> Result<Var, NnError> {
        let n = F::from_usize(2 * next.len()).expect("token count fits");
        let lf = self.fwd.forward(ctx, fwd)?;
        let lb = self.bwd.forward(ctx, bwd)?;
        let a = ctx.graph.softmax_cross_entropy(lf, next, n)?;
        let b = ctx.graph.softmax_cross_entropy(lb, prev, n)?;
        ctx.graph.add(a, b)
    }
}

/// Encoder output for the packed tokens of a batch.
///
/// Above the first layer every state has seen both directions through the
/// concatenated input, so only first-layer states are one-sided. Those are
/// the ones the language-model heads read.
#[derive(Clone, Debug)]
pub struct Encoded {
    /// Raw per-step output of every layer.
    pub layers: Vec<BiLstmOutput>,
    /// First-layer forward states, `[tokens × hidden]`; depend on the prefix
    /// up to each token only.
    pub fwd: Var,
    /// First-layer backward states; depend on the suffix only.
    pub bwd: Var,
    /// Top-layer forward and backward states, `[tokens × 2·hidden]`.
    pub concat: Var,
}

/// Component losses of one batch. Terms with zero weight are not built.
#[derive(Clone, Copy, Debug)]
pub struct Losses {
    pub total: Var,
    pub main: Var,
    pub pos: Option<Var>,
    pub word: Option<Var>,
    pub emb: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct Tagger {
    pub config: TaggerConfig,
    pub vocabs: Vocabs,
    pub features: FeatureExtractor,
    pub encoder: Vec<BiLstm>,
    pub pre_output: Dense,
    pub batch_norm: BatchNorm,
    pub output: Dense,
    pub crf: Option<Crf>,
    pub pos_lm: Option<LmHeads>,
    pub word_lm: Option<LmHeads>,
    pub emb_aux: Option<PretrainModel>,
}

/// Optional external resources a tagger is built from.
#[derive(Clone, Copy, Debug, Default)]
pub struct Resources<'a> {
    pub lexicon: Option<&'a GrammemeLexicon>,
    pub embeddings: Option<&'a EmbeddingTable>,
    /// Words for the auxiliary char-embedding loss; needs `embeddings`.
    pub aux_words: Option<&'a [String]>,
}

impl Tagger {
    pub const ENCODER: &'static str = "encoder";
    pub const PRE_OUTPUT: &'static str = "tag_head.pre_output";
    pub const BATCH_NORM: &'static str = "tag_head.batch_norm";
    pub const OUTPUT: &'static str = "tag_head.output";
    pub const POS_LM: &'static str = "pos_lm";
    pub const WORD_LM: &'static str = "word_lm";

    /// Parameter name prefixes that depend on the tag set and are built
    /// fresh when transferring to a new one.
    pub const TAGSET_PREFIXES: [&'static str; 3] = ["tag_head.output.", "pos_lm.", "crf."];

    /// Number of main-head classes.
    pub fn num_tags(&self) -> usize {
        self.vocabs.tags.len() - TAG_OFFSET as usize
    }

    /// Output width of the tag LM heads: every tag plus bos and eos.
    pub fn pos_lm_classes(&self) -> usize {
        self.vocabs.tags.len() - 1
    }

    /// Output width of the word LM heads: the word ids plus bos and eos.
    pub fn word_lm_classes(&self) -> usize {
        self.vocabs.words.len() + 2
    }

    pub fn new<F: Scalar>(
        store: &mut ParamStore<F>,
        config: &TaggerConfig,
        vocabs: Vocabs,
        resources: Resources<'_>,
        rng: &mut Rng,
    ) -> Result<Self, NnError> {
        config.validate()?;
        if vocabs.tags.len() <= TAG_OFFSET as usize {
            return Err(NnError::Invalid("tag vocabulary is empty".into()));
        }
        let features = FeatureExtractor::new(store, &config.features, &vocabs, resources.lexicon, resources.embeddings, rng)?;
        let mut encoder = Vec::with_capacity(config.layers);
        let mut input = features.out_dim();
        for l in 0..config.layers {
            encoder.push(BiLstm::new(store, &format!("{}.layer{l}", Self::ENCODER), input, config.hidden, rng)?);
            input = 2 * config.hidden;
        }
        let pre_output = Dense::new(store, Self::PRE_OUTPUT, input, config.pre_output_dim, Activation::None, rng)?;
        let batch_norm = BatchNorm::new(store, Self::BATCH_NORM, config.pre_output_dim)?;
        let k = vocabs.tags.len() - TAG_OFFSET as usize;
        let output = Dense::new(store, Self::OUTPUT, config.pre_output_dim, k, Activation::None, rng)?;
        let crf = config.crf.then(|| Crf::new(store, k)).transpose()?;
        let pos_lm = (config.lambda_pos > 0.0)
            .then(|| LmHeads::new(store, Self::POS_LM, config.hidden, vocabs.tags.len() - 1, rng))
            .transpose()?;
        let word_lm = (config.lambda_word > 0.0)
            .then(|| LmHeads::new(store, Self::WORD_LM, config.hidden, vocabs.words.len() + 2, rng))
            .transpose()?;
        let emb_aux = if config.lambda_emb > 0.0 {
            let (Some(table), Some(words), Some(enc)) = (resources.embeddings, resources.aux_words, features.char_encoder)
            else {
                return Err(NnError::Invalid(
                    "the char-embedding auxiliary loss needs a char encoder, word vectors and words".into(),
                ));
            };
            Some(PretrainModel::with_encoder(
                store,
                &config.features,
                vocabs.chars.clone(),
                enc,
                table,
                words.to_vec(),
                true,
                rng,
            )?)
        } else {
            None
        };
        Ok(Tagger { config: config.clone(), vocabs, features, encoder, pre_output, batch_norm, output, crf, pos_lm, word_lm, emb_aux })
    }

    /// Re-attaches to a store holding a saved tagger. The auxiliary
    /// char-embedding head is a training-only component and is not bound.
    pub fn bind<F: Scalar>(store: &ParamStore<F>, config: &TaggerConfig, vocabs: Vocabs) -> Result<Self, NnError> {
        config.validate()?;
        let features = FeatureExtractor::bind(store, &config.features)?;
        let encoder = (0..config.layers)
            .map(|l| BiLstm::bind(store, &format!("{}.layer{l}", Self::ENCODER)))
            .collect::<Result<Vec<_>, _>>()?;
        let has = |prefix: &str| store.iter().any(|(_, p)| p.name.starts_with(prefix));
        Ok(Tagger {
            config: config.clone(),
            features,
            encoder,
            pre_output: Dense::bind(store, Self::PRE_OUTPUT, Activation::None)?,
            batch_norm: BatchNorm::bind(store, Self::BATCH_NORM)?,
            output: Dense::bind(store, Self::OUTPUT, Activation::None)?,
            crf: config.crf.then(|| Crf::bind(store)).transpose()?,
            pos_lm: has("pos_lm.").then(|| LmHeads::bind(store, Self::POS_LM)).transpose()?,
            word_lm: has("word_lm.").then(|| LmHeads::bind(store, Self::WORD_LM)).transpose()?,
            emb_aux: None,
            vocabs,
        })
    }

    /// Word features, input dropout, and the BiLSTM stack with dropout
    /// between layers.
    pub fn encode<F: Scalar>(&self, ctx: &mut Ctx<'_, F>, batch: &Batch) -> Result<Encoded, NnError> {
        if batch.is_empty() || batch.lengths.contains(&0) {
            return Err(NnError::EmptySequence);
        }
        let x = self.features.forward(ctx, &batch.features)?;
        let x = ctx.dropout(x, self.config.dropout)?;
        let offsets = batch.offsets();
        let steps = batch.max_len();
        // Packed sentence-major rows to time-major rows, zero where a
        // sentence has ended.
        let to_time_major = |v: Var| -> Vec<Option<(Var, usize)>> {
            (0..steps)
                .flat_map(|t| offsets.iter().zip(&batch.lengths).map(move |(&o, &l)| (t < l).then_some((v, o + t))))
                .collect()
        };
        let cols = self.features.out_dim();
        let mut xt = ctx.graph.gather_rows(to_time_major(x), cols)?;
        let mut layers = Vec::with_capacity(self.encoder.len());
        for (l, lstm) in self.encoder.iter().enumerate() {
            let out = lstm.run(ctx, xt, &batch.lengths)?;
            if l + 1 < self.encoder.len() {
                let per_step = (0..steps)
                    .map(|t| ctx.graph.concat_cols(&[out.fwd[t], out.bwd[t]]))
                    .collect::<Result<Vec<_>, _>>()?;
                let rows = (0..steps)
                    .flat_map(|t| (0..batch.len()).map(move |i| (t, i)))
                    .map(|(t, i)| (t < batch.lengths[i]).then_some((per_step[t], i)))
                    .collect();
                xt = ctx.graph.gather_rows(rows, 2 * lstm.hidden())?;
                xt = ctx.dropout(xt, self.config.dropout)?;
            }
            layers.push(out);
        }
        let packed = |states: &[Var]| -> Vec<Option<(Var, usize)>> {
            batch.lengths.iter().enumerate().flat_map(|(i, &l)| (0..l).map(move |t| Some((states[t], i)))).collect()
        };
        let h = self.config.hidden;
        let top = layers.last().expect("at least one layer");
        let top_fwd = ctx.graph.gather_rows(packed(&top.fwd), h)?;
        let top_bwd = ctx.graph.gather_rows(packed(&top.bwd), h)?;
        let concat = ctx.graph.concat_cols(&[top_fwd, top_bwd])?;
        let (fwd, bwd) = if layers.len() == 1 {
            (top_fwd, top_bwd)
        } else {
            (ctx.graph.gather_rows(packed(&layers[0].fwd), h)?, ctx.graph.gather_rows(packed(&layers[0].bwd), h)?)
        };
        Ok(Encoded { layers, fwd, bwd, concat })
    }

    /// Per-token class scores `[tokens × K]` from the packed top-layer
    /// states. Batch norm statistics come from these rows only, so padding
    /// never enters them; with a single token the running statistics are
    /// used.
    pub fn tag_logits<F: Scalar>(&self, ctx: &mut Ctx<'_, F>, concat: Var) -> Result<Var, NnError> {
        let h = self.pre_output.forward(ctx, concat)?;
        let h = if ctx.graph.value(h).rows() < 2 {
            self.batch_norm.forward_running(ctx, h)?
        } else {
            self.batch_norm.forward(ctx, h)?
        };
        let h = ctx.graph.relu(h);
        self.output.forward(ctx, h)
    }

    /// Main-head class of every token; `None` for tags outside the
    /// vocabulary.
    fn gold_classes(&self, batch: &Batch) -> Vec<Option<usize>> {
        let k = self.num_tags() as u32;
        batch.tag_ids.iter().map(|&id| (id >= TAG_OFFSET && id - TAG_OFFSET < k).then(|| (id - TAG_OFFSET) as usize)).collect()
    }

    /// Mean token cross-entropy, or the CRF NLL summed over sentences and
    /// divided by the token count.
    pub fn main_loss<F: Scalar>(&self, ctx: &mut Ctx<'_, F>, logits: Var, batch: &Batch) -> Result<Var, NnError> {
        let gold = self.gold_classes(batch);
        if let Some(bad) = gold.iter().position(Option::is_none) {
            return Err(NnError::Index(format!("tag id {} is not a trainable tag", batch.tag_ids[bad])));
        }
        let n = F::from_usize(gold.len()).expect("token count fits");
        match &self.crf {
            None => ctx.graph.softmax_cross_entropy(logits, gold, n),
            Some(crf) => {
                let gold: Vec<usize> = gold.into_iter().map(Option::unwrap).collect();
                crf.nll(ctx, logits, &batch.lengths, &gold, n)
            }
        }
    }

    /// Next/previous targets for each packed token, from per-token LM
    /// classes and the bos/eos classes.
    fn neighbour_targets(lengths: &[usize], classes: &[usize], bos: usize, eos: usize) -> (Vec<Option<usize>>, Vec<Option<usize>>) {
        let mut next = Vec::with_capacity(classes.len());
        let mut prev = Vec::with_capacity(classes.len());
        let mut off = 0;
        for &l in lengths {
            for t in 0..l {
                next.push(Some(if t + 1 < l { classes[off + t + 1] } else { eos }));
                prev.push(Some(if t > 0 { classes[off + t - 1] } else { bos }));
            }
            off += l;
        }
        (next, prev)
    }

    /// Tag LM: forward states predict the next tag (eos after the last
    /// token), backward states the previous one (bos before the first).
    pub fn pos_lm_loss<F: Scalar>(&self, ctx: &mut Ctx<'_, F>, enc: &Encoded, batch: &Batch) -> Result<Var, NnError> {
        let heads = self.pos_lm.ok_or_else(|| NnError::Invalid("model has no tag LM heads".into()))?;
        let classes: Vec<usize> = batch.tag_ids.iter().map(|&id| id as usize - 1).collect();
        let (next, prev) = Self::neighbour_targets(&batch.lengths, &classes, (Vocab::BOS - 1) as usize, (Vocab::EOS - 1) as usize);
        heads.loss(ctx, enc.fwd, enc.bwd, next, prev)
    }

    /// Word LM over the capped word vocabulary (rare words are unk).
    pub fn word_lm_loss<F: Scalar>(&self, ctx: &mut Ctx<'_, F>, enc: &Encoded, batch: &Batch) -> Result<Var, NnError> {
        let heads = self.word_lm.ok_or_else(|| NnError::Invalid("model has no word LM heads".into()))?;
        let classes: Vec<usize> = batch.features.word_ids.iter().map(|&id| id as usize).collect();
        let v = self.vocabs.words.len();
        let (next, prev) = Self::neighbour_targets(&batch.lengths, &classes, v, v + 1);
        heads.loss(ctx, enc.fwd, enc.bwd, next, prev)
    }

    /// The pretraining objective over the batch words that have vectors.
    pub fn emb_aux_loss<F: Scalar>(&self, ctx: &mut Ctx<'_, F>, batch: &Batch) -> Result<Option<Var>, NnError> {
        let model = self.emb_aux.as_ref().ok_or_else(|| NnError::Invalid("model has no char-embedding head".into()))?;
        let words: Vec<&str> =
            batch.features.forms.iter().map(String::as_str).filter(|w| model.word_index(w).is_some()).collect();
        if words.is_empty() {
            return Ok(None);
        }
        crate::pretrain::char_embedding_aux_loss(ctx, model, &words).map(Some)
    }

    /// `main + λ_pos·pos + λ_word·word + λ_emb·emb`.
    pub fn losses<F: Scalar>(&self, ctx: &mut Ctx<'_, F>, batch: &Batch) -> Result<Losses, NnError> {
        let enc = self.encode(ctx, batch)?;
        let logits = self.tag_logits(ctx, enc.concat)?;
        let main = self.main_loss(ctx, logits, batch)?;
        let c = &self.config;
        let pos = if c.lambda_pos > 0.0 { Some(self.pos_lm_loss(ctx, &enc, batch)?) } else { None };
        let word = if c.lambda_word > 0.0 { Some(self.word_lm_loss(ctx, &enc, batch)?) } else { None };
        let emb = if c.lambda_emb > 0.0 { self.emb_aux_loss(ctx, batch)? } else { None };
        let total = total_loss(ctx, main, [(pos, c.lambda_pos), (word, c.lambda_word), (emb, c.lambda_emb)])?;
        Ok(Losses { total, main, pos, word, emb })
    }

    /// Predicted class ids per sentence.
    pub fn decode_classes<F: Scalar>(&self, store: &ParamStore<F>, batch: &Batch) -> Result<Vec<Vec<usize>>, NnError> {
        let mut ctx = Ctx::eval(store);
        let enc = self.encode(&mut ctx, batch)?;
        let logits = self.tag_logits(&mut ctx, enc.concat)?;
        let scores = ctx.graph.value(logits);
        let k = scores.cols();
        let mut out = Vec::with_capacity(batch.len());
        let mut off = 0;
        for &l in &batch.lengths {
            let em = &scores.data()[off * k..(off + l) * k];
            let path = match &self.crf {
                Some(crf) => crf.scores(store).viterbi(em).0,
                None => em.chunks(k).map(argmax).collect(),
            };
            out.push(path);
            off += l;
        }
        Ok(out)
    }

    /// Predicted tag strings per sentence.
    pub fn decode<F: Scalar>(&self, store: &ParamStore<F>, batch: &Batch) -> Result<Vec<Vec<String>>, NnError> {
        Ok(self
            .decode_classes(store, batch)?
            .into_iter()
            .map(|s| s.into_iter().map(|c| self.vocabs.tags.symbol(c as u32 + TAG_OFFSET).unwrap_or_default().to_string()).collect())
            .collect())
    }
}

/// `main + Σ λ·aux`; terms that are absent or have zero weight are left
/// out, so the result equals `main` exactly when every weight is zero.
pub fn total_loss<F: Scalar, const N: usize>(
    ctx: &mut Ctx<'_, F>,
    main: Var,
    aux: [(Option<Var>, f64); N],
) -> Result<Var, NnError> {
    let mut terms = vec![(main, F::one())];
    for (v, w) in aux {
        if w < 0.0 {
            return Err(NnError::Invalid(format!("negative loss weight {w}")));
        }
        if let (Some(v), true) = (v, w > 0.0) {
            terms.push((v, F::from_f64_lossy(w)));
        }
    }
    if terms.len() == 1 {
        return Ok(main);
    }
    ctx.graph.weighted_sum(terms)
}

/// Index of the largest value, the first one on ties.
pub fn argmax<F: Scalar>(row: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
