use std::path::Path;

use super::{read_text, write_text, CorpusError, Sentence, Token};

/// `form<TAB>tag` lines, blank line between sentences.
pub fn parse_tsv_tagged(text: &str) -> Result<Vec<Sentence>, CorpusError> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            if !cur.is_empty() {
                out.push(Sentence::new(std::mem::take(&mut cur)));
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(CorpusError::parse(i + 1, format!("expected 2 tab-separated fields, found {}", fields.len())));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(CorpusError::parse(i + 1, "empty form or tag"));
        }
        cur.push(Token::new(fields[0], fields[1]));
    }
    if !cur.is_empty() {
        out.push(Sentence::new(cur));
    }
    Ok(out)
}

/// Forms for tagging: one per line, optionally followed by a tab and a tag
/// that is ignored.
pub fn parse_tsv_forms(text: &str) -> Result<Vec<Vec<String>>, CorpusError> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            continue;
        }
        let form = line.split('\t').next().unwrap_or_default();
        if form.is_empty() || line.split('\t').count() > 2 {
            return Err(CorpusError::parse(i + 1, "expected `form` or `form<TAB>tag`"));
        }
        cur.push(form.to_string());
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    Ok(out)
}

pub fn read_tsv_tagged(path: &Path) -> Result<Vec<Sentence>, CorpusError> {
    parse_tsv_tagged(&read_text(path)?)
}

pub fn render_tsv_tagged(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        for t in &s.tokens {
            out.push_str(&t.form);
            out.push('\t');
            out.push_str(&t.tag);
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

pub fn write_tsv_tagged(path: &Path, sentences: &[Sentence]) -> Result<(), CorpusError> {
    write_text(path, &render_tsv_tagged(sentences))
}
