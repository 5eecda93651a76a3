use crate::corpus::{EmbeddingTable, GrammemeLexicon, Vocabs};
use crate::nn::{Ctx, Dense, NnError, ParamStore, Rng, Scalar, Var};

use super::chars::{CharBiLstm, CharEncoder, CharFF};
use super::grammemes::GrammemeEmbed;
use super::word::WordEmbedding;
use super::{CharEncoderKind, FeatureConfig};

/// Model inputs for a flat list of tokens.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TokenFeatures {
    /// `[tokens × max_word_len]`, see [`super::pad_chars`].
    pub padded_chars: Vec<u32>,
    /// Unpadded char ids per token.
    pub char_seqs: Vec<Vec<u32>>,
    /// `[tokens × grammeme slots]`; empty when there is no lexicon.
    pub grammemes: Vec<f32>,
    pub word_ids: Vec<u32>,
    /// Normalized forms.
    pub forms: Vec<String>,
}

impl TokenFeatures {
    pub fn len(&self) -> usize {
        self.word_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_ids.is_empty()
    }
}

/// Encoders for every enabled feature and the projection that joins them.
#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    pub config: FeatureConfig,
    pub char_encoder: Option<CharEncoder>,
    pub grammemes: Option<GrammemeEmbed>,
    pub words: Option<WordEmbedding>,
    pub projection: Dense,
}

impl FeatureExtractor {
    pub const GRAMMEMES: &'static str = "features.grammemes";
    pub const WORDS: &'static str = "features.word_embedding";
    pub const PROJECTION: &'static str = "features.projection";

    pub fn new<F: Scalar>(
        store: &mut ParamStore<F>,
        config: &FeatureConfig,
        vocabs: &Vocabs,
        lexicon: Option<&GrammemeLexicon>,
        pretrained_words: Option<&EmbeddingTable>,
        rng: &mut Rng,
    ) -> Result<Self, NnError> {
        config.validate()?;
        let char_encoder = match config.char_encoder {
            CharEncoderKind::None => None,
            CharEncoderKind::FeedForward => {
                Some(CharEncoder::FeedForward(CharFF::new(store, CharEncoder::NAME, vocabs.chars.len(), config, rng)?))
            }
            CharEncoderKind::BiLstm => {
                Some(CharEncoder::BiLstm(CharBiLstm::new(store, CharEncoder::NAME, vocabs.chars.len(), config, rng)?))
            }
        };
        let grammemes = if config.use_grammemes {
            let dim = lexicon.map_or(0, GrammemeLexicon::dim);
            Some(GrammemeEmbed::new(store, Self::GRAMMEMES, dim, config.grammeme_embed_dim, rng)?)
        } else {
            None
        };
        let words = if config.use_word_embedding {
            Some(WordEmbedding::new(
                store,
                Self::WORDS,
                &vocabs.words,
                pretrained_words,
                config.word_embed_dim,
                config.word_embedding_trainable,
                rng,
            )?)
        } else {
            None
        };
        let in_dim = char_encoder.map_or(0, |e| e.out_dim())
            + grammemes.map_or(0, |g| g.dense.out_dim)
            + words.map_or(0, |w| w.dim);
        let projection =
            Dense::new(store, Self::PROJECTION, in_dim, config.projection_dim, config.projection_activation, rng)?;
        Ok(FeatureExtractor { config: config.clone(), char_encoder, grammemes, words, projection })
    }

    pub fn bind<F: Scalar>(store: &ParamStore<F>, config: &FeatureConfig) -> Result<Self, NnError> {
        config.validate()?;
        let char_encoder = match config.char_encoder {
            CharEncoderKind::None => None,
            CharEncoderKind::FeedForward => Some(CharEncoder::FeedForward(CharFF::bind(store, CharEncoder::NAME, config)?)),
            CharEncoderKind::BiLstm => Some(CharEncoder::BiLstm(CharBiLstm::bind(store, CharEncoder::NAME)?)),
        };
        let grammemes = config.use_grammemes.then(|| GrammemeEmbed::bind(store, Self::GRAMMEMES)).transpose()?;
        let words = config.use_word_embedding.then(|| WordEmbedding::bind(store, Self::WORDS)).transpose()?;
        let projection = Dense::bind(store, Self::PROJECTION, config.projection_activation)?;
        Ok(FeatureExtractor { config: config.clone(), char_encoder, grammemes, words, projection })
    }

    pub fn out_dim(&self) -> usize {
        self.projection.out_dim
    }

    /// Concatenates the enabled features in the order char, grammeme, word
    /// and projects them; returns `[tokens × projection_dim]`.
    pub fn forward<F: Scalar>(&self, ctx: &mut Ctx<'_, F>, feats: &TokenFeatures) -> Result<Var, NnError> {
        if feats.is_empty() {
            return Err(NnError::EmptySequence);
        }
        let mut parts = Vec::with_capacity(3);
        if let Some(enc) = &self.char_encoder {
            parts.push(enc.encode(ctx, &feats.padded_chars, &feats.char_seqs)?);
        }
        if let Some(g) = &self.grammemes {
            parts.push(g.forward(ctx, &feats.grammemes)?);
        }
        if let Some(w) = &self.words {
            parts.push(w.forward(ctx, &feats.word_ids)?);
        }
        let x = if parts.len() == 1 { parts[0] } else { ctx.graph.concat_cols(&parts)? };
        self.projection.forward(ctx, x)
    }
}
