//! Neural morphological tagging: character-level word encoders, grammeme
//! probability features, auxiliary language-model losses, an optional CRF
//! output layer and transfer learning, on top of a small autodiff library.

pub mod cli;
pub mod corpus;
pub mod features;
pub mod nn;
pub mod pretrain;
pub mod synthetic;
pub mod tagger;
pub mod train;
