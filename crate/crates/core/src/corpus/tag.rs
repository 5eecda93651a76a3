use std::collections::BTreeSet;

use super::CorpusError;

/// Category name under which the part of speech is indexed.
pub const POS_CATEGORY: &str = "POS";

/// `UPOS` alone for empty/`_` features, otherwise `UPOS|` followed by the
/// features sorted as strings.
pub fn canonical_tag(upos: &str, feats: &str) -> String {
    let mut parts: Vec<&str> = if feats.is_empty() || feats == "_" {
        Vec::new()
    } else {
        feats.split('|').filter(|f| !f.is_empty()).collect()
    };
    if parts.is_empty() {
        return upos.to_string();
    }
    parts.sort_unstable();
    parts.dedup();
    format!("{upos}|{}", parts.join("|"))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedTag {
    pub pos: String,
    pub features: Vec<(String, String)>,
}

impl ParsedTag {
    pub fn feature(&self, category: &str) -> Option<&str> {
        self.features.iter().find(|(c, _)| c == category).map(|(_, v)| v.as_str())
    }

    /// Canonical string form.
    pub fn render(&self) -> String {
        let feats: Vec<String> = self.features.iter().map(|(c, v)| format!("{c}={v}")).collect();
        canonical_tag(&self.pos, &feats.join("|"))
    }

    /// CoNLL-U FEATS column value.
    pub fn feats_column(&self) -> String {
        if self.features.is_empty() {
            "_".into()
        } else {
            let mut f: Vec<String> = self.features.iter().map(|(c, v)| format!("{c}={v}")).collect();
            f.sort();
            f.join("|")
        }
    }
}

/// Splits `POS|Cat=Val|...`.
pub fn parse_tag(tag: &str) -> Result<ParsedTag, CorpusError> {
    let bad = |msg: &str| CorpusError::Tag { tag: tag.to_string(), msg: msg.to_string() };
    let mut it = tag.split('|');
    let pos = it.next().unwrap_or_default();
    if pos.is_empty() || pos.contains('=') {
        return Err(bad("missing part of speech"));
    }
    let mut features = Vec::new();
    let mut seen = BTreeSet::new();
    for f in it {
        let (c, v) = f.split_once('=').ok_or_else(|| bad("feature without `=`"))?;
        if c.is_empty() || v.is_empty() {
            return Err(bad("empty feature name or value"));
        }
        if c == POS_CATEGORY {
            return Err(bad("feature named POS"));
        }
        if !seen.insert(c) {
            return Err(bad("repeated feature category"));
        }
        features.push((c.to_string(), v.to_string()));
    }
    features.sort();
    Ok(ParsedTag { pos: pos.to_string(), features })
}

/// Keeps the part of speech and only the listed feature categories.
/// Unparseable tags are returned unchanged.
pub fn project_tag(tag: &str, keep: &BTreeSet<String>) -> String {
    match parse_tag(tag) {
        Ok(mut p) => {
            p.features.retain(|(c, _)| keep.contains(c));
            p.render()
        }
        Err(_) => tag.to_string(),
    }
}
