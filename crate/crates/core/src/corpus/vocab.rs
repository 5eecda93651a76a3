use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Sentence;

/// Bidirectional symbol ↔ id map. The first `reserved` ids hold special
/// symbols; ordinary symbols follow densely.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocab {
    symbols: Vec<String>,
    reserved: usize,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    reserved: usize,
    symbols: Vec<String>,
}

impl From<VocabRepr> for Vocab {
    fn from(r: VocabRepr) -> Self {
        let index = r.symbols.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
        Vocab { symbols: r.symbols, reserved: r.reserved, index }
    }
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        VocabRepr { reserved: v.reserved, symbols: v.symbols }
    }
}

impl Vocab {
    pub const PAD: u32 = 0;
    pub const UNK: u32 = 1;
    pub const BOS: u32 = 1;
    pub const EOS: u32 = 2;

    fn with_reserved(names: &[&str]) -> Self {
        let symbols: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        let index = symbols.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
        Vocab { symbols, reserved: names.len(), index }
    }

    /// Char or word vocabulary: pad = 0, unk = 1.
    pub fn symbols() -> Self {
        Self::with_reserved(&["<pad>", "<unk>"])
    }

    /// Tag vocabulary: pad = 0, bos = 1, eos = 2.
    pub fn tags() -> Self {
        Self::with_reserved(&["<pad>", "<bos>", "<eos>"])
    }

    pub fn insert(&mut self, symbol: &str) -> u32 {
        if let Some(&id) = self.index.get(symbol) {
            return id;
        }
        let id = self.symbols.len() as u32;
        self.symbols.push(symbol.to_string());
        self.index.insert(symbol.to_string(), id);
        id
    }

    pub fn get(&self, symbol: &str) -> Option<u32> {
        self.index.get(symbol).copied()
    }

    /// Id of a stored ordinary symbol, falling back to unk.
    pub fn id_or_unk(&self, symbol: &str) -> u32 {
        match self.index.get(symbol) {
            Some(&id) if id as usize >= self.reserved => id,
            _ => Self::UNK,
        }
    }

    pub fn symbol(&self, id: u32) -> Option<&str> {
        self.symbols.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn reserved(&self) -> usize {
        self.reserved
    }

    /// Ordinary (non-reserved) symbols in id order.
    pub fn entries(&self) -> &[String] {
        &self.symbols[self.reserved..]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocabConfig {
    pub min_word_freq: usize,
    pub max_word_vocab: usize,
    pub lowercase: bool,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig { min_word_freq: 1, max_word_vocab: 10_000, lowercase: false }
    }
}

impl VocabConfig {
    pub fn normalize<'a>(&self, form: &'a str) -> std::borrow::Cow<'a, str> {
        if self.lowercase {
            std::borrow::Cow::Owned(form.to_lowercase())
        } else {
            std::borrow::Cow::Borrowed(form)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabs {
    pub chars: Vocab,
    pub words: Vocab,
    pub tags: Vocab,
}

fn ranked(counts: HashMap<String, usize>) -> Vec<(String, usize)> {
    let mut v: Vec<(String, usize)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

/// Vocabularies over a corpus, each ordered by frequency (descending) then
/// lexicographically.
pub fn build_vocabs(sentences: &[Sentence], cfg: &VocabConfig) -> Vocabs {
    let mut chars: HashMap<String, usize> = HashMap::new();
    let mut words: HashMap<String, usize> = HashMap::new();
    let mut tags: HashMap<String, usize> = HashMap::new();
    for t in sentences.iter().flat_map(|s| &s.tokens) {
        let form = cfg.normalize(&t.form);
        for c in form.chars() {
            *chars.entry(c.to_string()).or_default() += 1;
        }
        *words.entry(form.into_owned()).or_default() += 1;
        *tags.entry(t.tag.clone()).or_default() += 1;
    }
    let mut cv = Vocab::symbols();
    for (c, _) in ranked(chars) {
        cv.insert(&c);
    }
    let mut wv = Vocab::symbols();
    for (w, n) in ranked(words).into_iter().take(cfg.max_word_vocab) {
        if n >= cfg.min_word_freq {
            wv.insert(&w);
        }
    }
    let mut tv = Vocab::tags();
    for (t, _) in ranked(tags) {
        tv.insert(&t);
    }
    Vocabs { chars: cv, words: wv, tags: tv }
}
