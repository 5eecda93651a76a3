//! Corpus readers and writers, vocabularies, and batch assembly.

mod batch;
mod conllu;
mod embeddings;
mod lexicon;
mod tag;
mod tsv;
mod vocab;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use batch::{batch_sentences, encode_batch, Batch, BatchInputs};
pub use conllu::{parse_conllu, read_conllu, write_conllu, ConlluDocument, ConlluLine};
pub use embeddings::{parse_embeddings, read_embeddings_text, EmbeddingTable};
pub use lexicon::{parse_grammeme_lexicon, read_grammeme_lexicon, Analysis, GrammemeCategory, GrammemeLexicon};
pub use tag::{canonical_tag, parse_tag, project_tag, ParsedTag, POS_CATEGORY};
pub use tsv::{parse_tsv_forms, parse_tsv_tagged, read_tsv_tagged, render_tsv_tagged, write_tsv_tagged};
pub use vocab::{build_vocabs, Vocab, VocabConfig, Vocabs};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub form: String,
    /// Full grammatical value: `POS` or `POS|Cat=Val|...` with sorted
    /// features.
    pub tag: String,
}

impl Token {
    pub fn new(form: impl Into<String>, tag: impl Into<String>) -> Self {
        Token { form: form.into(), tag: tag.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Self {
        Sentence { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn forms(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.form.clone()).collect()
    }

    pub fn tags(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.tag.clone()).collect()
    }
}

pub fn token_count(sentences: &[Sentence]) -> usize {
    sentences.iter().map(Sentence::len).sum()
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("malformed tag `{tag}`: {msg}")]
    Tag { tag: String, msg: String },
}

impl CorpusError {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        CorpusError::Parse { line, msg: msg.into() }
    }
}

/// Reads a tagged corpus: CoNLL-U when the file name ends in `.conllu`,
/// `form<TAB>tag` lines otherwise.
pub fn read_corpus(path: &Path) -> Result<Vec<Sentence>, CorpusError> {
    if is_conllu(path) {
        read_conllu(path)
    } else {
        read_tsv_tagged(path)
    }
}

pub fn is_conllu(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("conllu"))
}

pub(crate) fn read_text(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), CorpusError> {
    std::fs::write(path, text).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
}
