//! Per-word input features: character encoders, grammeme probabilities,
//! word embeddings and the projection that composes them.

mod chars;
mod compose;
mod grammemes;
mod word;

#[cfg(test)]
mod tests;

use serde::{Deserialize, Serialize};

pub use chars::{char_ids, pad_chars, CharBiLstm, CharEncoder, CharFF};
pub use compose::{FeatureExtractor, TokenFeatures};
pub use grammemes::{grammeme_probabilities, GrammemeEmbed};
pub use word::WordEmbedding;

use crate::nn::{Activation, NnError};

/// Length of the padded character window used by the feedforward encoder.
pub const MAX_WORD_LEN: usize = 11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CharEncoderKind {
    None,
    #[serde(alias = "ff")]
    FeedForward,
    #[serde(alias = "bilstm")]
    BiLstm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub char_encoder: CharEncoderKind,
    pub use_grammemes: bool,
    pub use_word_embedding: bool,
    pub char_embed_dim: usize,
    pub max_word_len: usize,
    pub char_ff_hidden: usize,
    pub char_ff_out: usize,
    pub char_ff_dropout: f64,
    /// Activation after the second feedforward layer.
    pub char_ff_out_activation: Activation,
    pub char_bilstm_hidden: usize,
    pub grammeme_embed_dim: usize,
    /// Used only when no pretrained table is given.
    pub word_embed_dim: usize,
    pub word_embedding_trainable: bool,
    pub projection_dim: usize,
    pub projection_activation: Activation,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            char_encoder: CharEncoderKind::FeedForward,
            use_grammemes: true,
            use_word_embedding: false,
            char_embed_dim: 24,
            max_word_len: MAX_WORD_LEN,
            char_ff_hidden: 500,
            char_ff_out: 200,
            char_ff_dropout: 0.15,
            char_ff_out_activation: Activation::Relu,
            char_bilstm_hidden: 150,
            grammeme_embed_dim: 64,
            word_embed_dim: 100,
            word_embedding_trainable: true,
            projection_dim: 200,
            projection_activation: Activation::None,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.char_encoder == CharEncoderKind::None && !self.use_grammemes && !self.use_word_embedding {
            return Err(NnError::Invalid("at least one input feature must be enabled".into()));
        }
        if self.max_word_len == 0 || self.projection_dim == 0 || self.char_embed_dim == 0 {
            return Err(NnError::Invalid("feature dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.char_ff_dropout) {
            return Err(NnError::DropoutRate(self.char_ff_dropout));
        }
        Ok(())
    }
}
