//! Small generated languages for tests and demos. Sentences follow a fixed
//! clause grammar over ten word classes; suffixes mark most classes, and the
//! singular noun forms are shared between subject and object, so those
//! tokens need context to be tagged.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};

use crate::corpus::{GrammemeLexicon, Sentence, Token};
use crate::nn::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Class {
    Det,
    Adj,
    NounNomSing,
    NounAccSing,
    NounNomPlur,
    VerbPast,
    VerbPres,
    Adp,
    Adv,
    Punct,
}

const CLASSES: [Class; 10] = [
    Class::Det,
    Class::Adj,
    Class::NounNomSing,
    Class::NounAccSing,
    Class::NounNomPlur,
    Class::VerbPast,
    Class::VerbPres,
    Class::Adp,
    Class::Adv,
    Class::Punct,
];

/// Annotation scheme applied to the generated classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tagset {
    /// Ten tags in `POS|Cat=Val` form.
    Morph,
    /// Nine coarse tags with no names in common with `Morph`; nominative
    /// singular and plural nouns share one tag.
    Coarse,
}

impl Tagset {
    fn tag(self, c: Class) -> &'static str {
        match self {
            Tagset::Morph => match c {
                Class::Det => "DET",
                Class::Adj => "ADJ|Number=Sing",
                Class::NounNomSing => "NOUN|Case=Nom|Number=Sing",
                Class::NounAccSing => "NOUN|Case=Acc|Number=Sing",
                Class::NounNomPlur => "NOUN|Case=Nom|Number=Plur",
                Class::VerbPast => "VERB|Tense=Past",
                Class::VerbPres => "VERB|Tense=Pres",
                Class::Adp => "ADP",
                Class::Adv => "ADV",
                Class::Punct => "PUNCT",
            },
            Tagset::Coarse => match c {
                Class::Det => "Dt",
                Class::Adj => "Jj",
                Class::NounNomSing | Class::NounNomPlur => "Subj",
                Class::NounAccSing => "Obj",
                Class::VerbPast => "Vd",
                Class::VerbPres => "Vp",
                Class::Adp => "In",
                Class::Adv => "Rb",
                Class::Punct => "Pu",
            },
        }
    }

    /// Every tag of the scheme, sorted.
    pub fn tags(self) -> Vec<&'static str> {
        let mut t: Vec<&str> = CLASSES.iter().map(|&c| self.tag(c)).collect();
        t.sort_unstable();
        t.dedup();
        t
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticConfig {
    pub sentences: usize,
    /// Probability of replacing a gold tag by a different random tag.
    pub label_noise: f64,
    pub tagset: Tagset,
    /// Seed of the sentence sample.
    pub seed: u64,
    /// Seed of the word stems; corpora with the same value share a
    /// vocabulary.
    pub language_seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { sentences: 200, label_noise: 0.0, tagset: Tagset::Morph, seed: 0, language_seed: 7 }
    }
}

struct Language {
    nouns: Vec<String>,
    adjs: Vec<String>,
    verbs: Vec<String>,
    advs: Vec<String>,
}

const DETS: [&str; 3] = ["ta", "te", "to"];
const ADPS: [&str; 4] = ["na", "po", "za", "v"];
const PUNCT: [&str; 2] = [".", "!"];

fn stems(rng: &mut Rng, n: usize) -> Vec<String> {
    const C: &[u8] = b"bdgklmnprstvz";
    const V: &[u8] = b"aeiu";
    let mut out = std::collections::BTreeSet::new();
    while out.len() < n {
        let syll = rng.gen_range(1..=3);
        let s: String = (0..syll)
            .flat_map(|_| [C[rng.gen_range(0..C.len())] as char, V[rng.gen_range(0..V.len())] as char])
            .collect();
        out.insert(format!("{s}{}", C[rng.gen_range(0..C.len())] as char));
    }
    let mut v: Vec<String> = out.into_iter().collect();
    v.shuffle(rng);
    v
}

impl Language {
    fn new(seed: u64) -> Self {
        let mut rng = Rng::seed_from_u64(seed);
        Language { nouns: stems(&mut rng, 60), adjs: stems(&mut rng, 30), verbs: stems(&mut rng, 40), advs: stems(&mut rng, 15) }
    }

    fn form(&self, c: Class, rng: &mut Rng) -> String {
        let pick = |v: &[String], rng: &mut Rng| v[rng.gen_range(0..v.len())].clone();
        match c {
            Class::Det => DETS[rng.gen_range(0..DETS.len())].into(),
            Class::Adj => pick(&self.adjs, rng) + "ij",
            Class::NounNomSing | Class::NounAccSing => pick(&self.nouns, rng) + "o",
            Class::NounNomPlur => pick(&self.nouns, rng) + "ov",
            Class::VerbPast => pick(&self.verbs, rng) + "al",
            Class::VerbPres => pick(&self.verbs, rng) + "et",
            Class::Adp => ADPS[rng.gen_range(0..ADPS.len())].into(),
            Class::Adv => pick(&self.advs, rng) + "li",
            Class::Punct => PUNCT[rng.gen_range(0..PUNCT.len())].into(),
        }
    }
}

fn noun_phrase(out: &mut Vec<Class>, noun: Class, rng: &mut Rng) {
    if rng.gen_bool(0.5) {
        out.push(Class::Det);
    }
    if rng.gen_bool(0.4) {
        out.push(Class::Adj);
    }
    out.push(noun);
}

/// `NP_nom V [NP_acc] [ADP NP_acc] [ADV] PUNCT`
fn clause(rng: &mut Rng) -> Vec<Class> {
    let mut c = Vec::new();
    let subject = if rng.gen_bool(0.6) { Class::NounNomSing } else { Class::NounNomPlur };
    noun_phrase(&mut c, subject, rng);
    c.push(if rng.gen_bool(0.5) { Class::VerbPast } else { Class::VerbPres });
    if rng.gen_bool(0.6) {
        noun_phrase(&mut c, Class::NounAccSing, rng);
    }
    if rng.gen_bool(0.4) {
        c.push(Class::Adp);
        noun_phrase(&mut c, Class::NounAccSing, rng);
    }
    if rng.gen_bool(0.3) {
        c.push(Class::Adv);
    }
    c.push(Class::Punct);
    c
}

pub fn generate(cfg: &SyntheticConfig) -> Vec<Sentence> {
    let lang = Language::new(cfg.language_seed);
    let mut rng = Rng::seed_from_u64(cfg.seed);
    let tags = cfg.tagset.tags();
    (0..cfg.sentences)
        .map(|_| {
            let tokens = clause(&mut rng)
                .into_iter()
                .map(|c| {
                    let form = lang.form(c, &mut rng);
                    let gold = cfg.tagset.tag(c);
                    let tag = if cfg.label_noise > 0.0 && rng.gen_bool(cfg.label_noise) {
                        let others: Vec<&str> = tags.iter().copied().filter(|&t| t != gold).collect();
                        others[rng.gen_range(0..others.len())]
                    } else {
                        gold
                    };
                    Token::new(form, tag)
                })
                .collect();
            Sentence::new(tokens)
        })
        .collect()
}

/// Relative form/tag frequencies over a large clean sample of the language,
/// as a grammeme lexicon.
pub fn lexicon(tagset: Tagset, language_seed: u64) -> GrammemeLexicon {
    let sample = generate(&SyntheticConfig {
        sentences: 5000,
        label_noise: 0.0,
        tagset,
        seed: u64::MAX - language_seed,
        language_seed,
    });
    let mut counts: BTreeMap<(String, String), f64> = BTreeMap::new();
    let mut total = 0.0;
    for t in sample.iter().flat_map(|s| &s.tokens) {
        *counts.entry((t.form.clone(), t.tag.clone())).or_default() += 1.0;
        total += 1.0;
    }
    GrammemeLexicon::from_entries(counts.iter().map(|((f, t), n)| (f.as_str(), t.as_str(), n / total)))
        .expect("generated tags parse")
}
