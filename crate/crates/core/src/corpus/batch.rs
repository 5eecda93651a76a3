use rand::seq::SliceRandom;

use super::{GrammemeLexicon, Sentence, Vocab, Vocabs};
use crate::features::{char_ids, grammeme_probabilities, pad_chars, TokenFeatures};
use crate::nn::Rng;

/// Everything needed to turn forms and tags into ids.
#[derive(Clone, Copy, Debug)]
pub struct BatchInputs<'a> {
    pub vocabs: &'a Vocabs,
    pub lexicon: Option<&'a GrammemeLexicon>,
    pub lowercase: bool,
    pub max_word_len: usize,
}

impl BatchInputs<'_> {
    fn normalize<'s>(&self, form: &'s str) -> std::borrow::Cow<'s, str> {
        if self.lowercase {
            form.to_lowercase().into()
        } else {
            form.into()
        }
    }

    /// Id of a tag, or `tags.len()` for a tag the vocabulary has never seen.
    pub fn tag_id(&self, tag: &str) -> u32 {
        self.vocabs.tags.get(tag).unwrap_or(self.vocabs.tags.len() as u32)
    }

    pub fn token_features<'s, I>(&self, forms: I) -> TokenFeatures
    where
        I: IntoIterator<Item = &'s str>,
    {
        let mut out = TokenFeatures::default();
        for form in forms {
            let form = self.normalize(form);
            out.padded_chars.extend(pad_chars(&form, &self.vocabs.chars, self.max_word_len));
            out.char_seqs.push(char_ids(&form, &self.vocabs.chars));
            out.word_ids.push(self.vocabs.words.id_or_unk(&form));
            if let Some(lex) = self.lexicon {
                out.grammemes.extend(grammeme_probabilities(&form, lex).into_iter().map(|p| p as f32));
            }
            out.forms.push(form.into_owned());
        }
        out
    }
}

/// Sentences of one minibatch. Token data is packed sentence by sentence;
/// the padded `[sentences × max_len]` views are available through methods.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// Positions of the sentences in the source corpus.
    pub indices: Vec<usize>,
    pub lengths: Vec<usize>,
    pub features: TokenFeatures,
    pub tag_ids: Vec<u32>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.lengths.iter().sum()
    }

    pub fn max_len(&self) -> usize {
        self.lengths.iter().copied().max().unwrap_or(0)
    }

    /// Start of each sentence in the packed token arrays.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.lengths
            .iter()
            .map(|&l| {
                let o = acc;
                acc += l;
                o
            })
            .collect()
    }

    pub fn mask(&self) -> Vec<Vec<bool>> {
        let t = self.max_len();
        self.lengths.iter().map(|&l| (0..t).map(|i| i < l).collect()).collect()
    }

    fn padded(&self, packed: &[u32]) -> Vec<Vec<u32>> {
        let t = self.max_len();
        self.offsets()
            .iter()
            .zip(&self.lengths)
            .map(|(&o, &l)| {
                let mut row = packed[o..o + l].to_vec();
                row.resize(t, Vocab::PAD);
                row
            })
            .collect()
    }

    pub fn padded_tag_ids(&self) -> Vec<Vec<u32>> {
        self.padded(&self.tag_ids)
    }

    pub fn padded_word_ids(&self) -> Vec<Vec<u32>> {
        self.padded(&self.features.word_ids)
    }

    /// `[sentences][max_len][max_word_len]`, pad positions all zero.
    pub fn char_matrix(&self, max_word_len: usize) -> Vec<Vec<Vec<u32>>> {
        let t = self.max_len();
        self.offsets()
            .iter()
            .zip(&self.lengths)
            .map(|(&o, &l)| {
                (0..t)
                    .map(|i| {
                        if i < l {
                            self.features.padded_chars[(o + i) * max_word_len..(o + i + 1) * max_word_len].to_vec()
                        } else {
                            vec![Vocab::PAD; max_word_len]
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

pub fn encode_batch(sentences: &[Sentence], indices: &[usize], inputs: &BatchInputs<'_>) -> Batch {
    let chosen: Vec<&Sentence> = indices.iter().map(|&i| &sentences[i]).collect();
    let features = inputs.token_features(chosen.iter().flat_map(|s| s.tokens.iter().map(|t| t.form.as_str())));
    let tag_ids = chosen.iter().flat_map(|s| &s.tokens).map(|t| inputs.tag_id(&t.tag)).collect();
    Batch { indices: indices.to_vec(), lengths: chosen.iter().map(|s| s.len()).collect(), features, tag_ids }
}

/// Groups the corpus into batches of at most `batch_size` sentences,
/// shuffled with `rng` when given and in corpus order otherwise. Empty
/// sentences are skipped.
pub fn batch_sentences(
    sentences: &[Sentence],
    inputs: &BatchInputs<'_>,
    batch_size: usize,
    rng: Option<&mut Rng>,
) -> Vec<Batch> {
    let mut order: Vec<usize> = (0..sentences.len()).filter(|&i| !sentences[i].is_empty()).collect();
    if let Some(rng) = rng {
        order.shuffle(rng);
    }
    order.chunks(batch_size.max(1)).map(|c| encode_batch(sentences, c, inputs)).collect()
}
