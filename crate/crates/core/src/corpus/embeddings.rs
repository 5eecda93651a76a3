use std::collections::HashMap;
use std::path::Path;

use super::{read_text, CorpusError};

/// Pretrained word vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub words: Vec<String>,
    pub dim: usize,
    /// Row-major `[words × dim]`.
    pub vectors: Vec<f32>,
    /// Repeated words dropped while reading (first occurrence kept).
    pub duplicates: usize,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(words: Vec<String>, dim: usize, vectors: Vec<f32>) -> Self {
        assert_eq!(words.len() * dim, vectors.len());
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        EmbeddingTable { words, dim, vectors, duplicates: 0, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn row_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn vector(&self, row: usize) -> &[f32] {
        &self.vectors[row * self.dim..(row + 1) * self.dim]
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.row_of(word).map(|r| self.vector(r))
    }
}

/// Whitespace-separated `word v1 … vd` lines, with an optional leading
/// `count dim` header.
pub fn parse_embeddings(text: &str) -> Result<EmbeddingTable, CorpusError> {
    let mut words = Vec::new();
    let mut vectors = Vec::new();
    let mut index = HashMap::new();
    let mut dim: Option<usize> = None;
    let mut duplicates = 0;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if i == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<u64>().is_ok()) {
            continue;
        }
        if fields.len() < 2 {
            return Err(CorpusError::parse(lineno, "word without values"));
        }
        let d = fields.len() - 1;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(CorpusError::parse(lineno, format!("expected {expected} values, found {d}")))
            }
            _ => {}
        }
        let mut row = Vec::with_capacity(d);
        for f in &fields[1..] {
            let v: f32 = f.parse().map_err(|_| CorpusError::parse(lineno, format!("non-numeric value `{f}`")))?;
            row.push(v);
        }
        let word = fields[0].to_string();
        if index.contains_key(&word) {
            duplicates += 1;
            continue;
        }
        index.insert(word.clone(), words.len());
        words.push(word);
        vectors.extend(row);
    }
    Ok(EmbeddingTable { words, dim: dim.unwrap_or(0), vectors, duplicates, index })
}

pub fn read_embeddings_text(path: &Path) -> Result<EmbeddingTable, CorpusError> {
    parse_embeddings(&read_text(path)?)
}
