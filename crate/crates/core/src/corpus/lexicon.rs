use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tag::{parse_tag, POS_CATEGORY};
use super::{read_text, CorpusError};

/// Value used for a category that an analysis does not mark.
pub const ABSENT_VALUE: &str = "_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub tag: String,
    pub frequency: f64,
    /// Flattened slot index for every category, in category order.
    slots: Vec<usize>,
}

impl Analysis {
    pub fn slots(&self) -> &[usize] {
        &self.slots
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrammemeCategory {
    pub name: String,
    pub values: Vec<String>,
}

/// Form → analyses with frequencies. Categories and their values are
/// sorted lexicographically; every category other than POS also carries an
/// `_` value for analyses that do not mark it, so each category's slots
/// partition the analyses of a form.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GrammemeLexicon {
    entries: BTreeMap<String, Vec<Analysis>>,
    categories: Vec<GrammemeCategory>,
    offsets: Vec<usize>,
}

impl GrammemeLexicon {
    /// Builds the lexicon from `(form, tag, frequency)` triples. Repeated
    /// `(form, tag)` pairs have their frequencies summed.
    pub fn from_entries<'a, I>(items: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = (&'a str, &'a str, f64)>,
    {
        let mut merged: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for (form, tag, freq) in items {
            if !(freq >= 0.0 && freq.is_finite()) {
                return Err(CorpusError::Tag { tag: tag.into(), msg: format!("bad frequency {freq}") });
            }
            *merged.entry(form.into()).or_default().entry(tag.into()).or_default() += freq;
        }
        let mut values: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut parsed = BTreeMap::new();
        for tag in merged.values().flat_map(|m| m.keys()) {
            if parsed.contains_key(tag) {
                continue;
            }
            let p = parse_tag(tag)?;
            values.entry(POS_CATEGORY.into()).or_default().insert(p.pos.clone());
            for (c, v) in &p.features {
                values.entry(c.clone()).or_default().insert(v.clone());
            }
            parsed.insert(tag.clone(), p);
        }
        let categories: Vec<GrammemeCategory> = values
            .into_iter()
            .map(|(name, mut vals)| {
                if name != POS_CATEGORY {
                    vals.insert(ABSENT_VALUE.into());
                }
                GrammemeCategory { name, values: vals.into_iter().collect() }
            })
            .collect();
        let offsets = category_offsets(&categories);
        let mut entries = BTreeMap::new();
        for (form, tags) in merged {
            let analyses = tags
                .into_iter()
                .map(|(tag, frequency)| {
                    let p = &parsed[&tag];
                    let slots = categories
                        .iter()
                        .zip(&offsets)
                        .map(|(cat, &off)| {
                            let v = if cat.name == POS_CATEGORY {
                                p.pos.as_str()
                            } else {
                                p.feature(&cat.name).unwrap_or(ABSENT_VALUE)
                            };
                            off + cat.values.binary_search_by(|x| x.as_str().cmp(v)).expect("value indexed")
                        })
                        .collect();
                    Analysis { tag, frequency, slots }
                })
                .collect();
            entries.insert(form, analyses);
        }
        Ok(GrammemeLexicon { entries, categories, offsets })
    }

    pub fn categories(&self) -> &[GrammemeCategory] {
        &self.categories
    }

    /// Total number of (category, value) slots.
    pub fn dim(&self) -> usize {
        self.categories.iter().map(|c| c.values.len()).sum()
    }

    /// Start of each category's slots in the flattened vector.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn slot(&self, category: &str, value: &str) -> Option<usize> {
        let i = self.categories.iter().position(|c| c.name == category)?;
        let j = self.categories[i].values.iter().position(|v| v == value)?;
        Some(self.offsets[i] + j)
    }

    pub fn analyses(&self, form: &str) -> Option<&[Analysis]> {
        self.entries.get(form).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn forms(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

fn category_offsets(categories: &[GrammemeCategory]) -> Vec<usize> {
    let mut acc = 0;
    categories
        .iter()
        .map(|c| {
            let o = acc;
            acc += c.values.len();
            o
        })
        .collect()
}

/// `form<TAB>tag<TAB>frequency` lines; blank lines are ignored.
pub fn parse_grammeme_lexicon(text: &str) -> Result<GrammemeLexicon, CorpusError> {
    let mut items = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(CorpusError::parse(i + 1, format!("expected 3 fields, found {}", fields.len())));
        }
        let freq: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| CorpusError::parse(i + 1, format!("non-numeric frequency `{}`", fields[2])))?;
        if !(freq >= 0.0 && freq.is_finite()) {
            return Err(CorpusError::parse(i + 1, format!("frequency must be nonnegative, got {freq}")));
        }
        parse_tag(fields[1])?;
        items.push((fields[0], fields[1], freq));
    }
    GrammemeLexicon::from_entries(items)
}

pub fn read_grammeme_lexicon(path: &Path) -> Result<GrammemeLexicon, CorpusError> {
    parse_grammeme_lexicon(&read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cut_has_two_analyses() {
        let lex = parse_grammeme_lexicon("cut\tVERB\t8.75e-5\ncut\tNOUN\t2.84e-5\n").unwrap();
        assert_eq!(lex.analyses("cut").unwrap().len(), 2);
        assert_eq!(lex.categories().len(), 1);
        assert_eq!(lex.categories()[0].values, vec!["NOUN", "VERB"]);
    }

    #[test]
    fn empty_lexicon() {
        let lex = parse_grammeme_lexicon("").unwrap();
        assert!(lex.is_empty());
        assert_eq!(lex.dim(), 0);
    }

    #[test]
    fn rejects_bad_frequency_and_tag() {
        assert!(matches!(parse_grammeme_lexicon("a\tX\t-1\n"), Err(CorpusError::Parse { line: 1, .. })));
        assert!(matches!(parse_grammeme_lexicon("a\tX\tlots\n"), Err(CorpusError::Parse { line: 1, .. })));
        assert!(matches!(parse_grammeme_lexicon("a\tX|Case\t1\n"), Err(CorpusError::Tag { .. })));
        assert!(parse_grammeme_lexicon("a\tX\n").is_err());
    }

    #[test]
    fn absent_value_slot() {
        let lex = parse_grammeme_lexicon("a\tNOUN|Number=Sing\t1\nb\tVERB\t1\n").unwrap();
        let names: Vec<_> = lex.categories().iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["Number", "POS"]);
        assert_eq!(lex.categories()[0].values, vec!["Sing", "_"]);
        let b = &lex.analyses("b").unwrap()[0];
        assert_eq!(b.slots(), &[lex.slot("Number", "_").unwrap(), lex.slot("POS", "VERB").unwrap()]);
    }

    proptest! {
        #[test]
        fn duplicates_are_summed(a in 0.0f64..10.0, b in 0.0f64..10.0) {
            let lex = parse_grammeme_lexicon(&format!("w\tX\t{a}\nw\tX\t{b}\n")).unwrap();
            let an = lex.analyses("w").unwrap();
            prop_assert_eq!(an.len(), 1);
            prop_assert_eq!(an[0].frequency, a + b);
        }
    }
}
