use std::path::Path;

use super::tag::{canonical_tag, parse_tag};
use super::{read_text, write_text, CorpusError, Sentence, Token};

const FIELDS: usize = 10;
const ID: usize = 0;
const FORM: usize = 1;
const UPOS: usize = 3;
const FEATS: usize = 5;

/// One line of a CoNLL-U file, kept verbatim so that a document can be
/// written back with only the tag columns changed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConlluLine {
    Comment(String),
    Blank,
    /// Regular word line (integer ID).
    Word(Vec<String>),
    /// Multiword range (`1-2`) or empty node (`1.1`).
    Other(Vec<String>),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConlluDocument {
    pub lines: Vec<ConlluLine>,
}

pub fn parse_conllu(text: &str) -> Result<ConlluDocument, CorpusError> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let lineno = i + 1;
        if line.trim().is_empty() {
            lines.push(ConlluLine::Blank);
            continue;
        }
        if line.starts_with('#') {
            lines.push(ConlluLine::Comment(line.to_string()));
            continue;
        }
        let fields: Vec<String> = line.split('\t').map(str::to_string).collect();
        if fields.len() != FIELDS {
            return Err(CorpusError::parse(lineno, format!("expected {FIELDS} tab-separated fields, found {}", fields.len())));
        }
        let id = &fields[ID];
        if id.contains('-') || id.contains('.') {
            lines.push(ConlluLine::Other(fields));
            continue;
        }
        if id.parse::<u32>().is_err() {
            return Err(CorpusError::parse(lineno, format!("bad token id `{id}`")));
        }
        if fields[FORM].is_empty() || fields[UPOS].is_empty() {
            return Err(CorpusError::parse(lineno, "empty FORM or UPOS"));
        }
        lines.push(ConlluLine::Word(fields));
    }
    Ok(ConlluDocument { lines })
}

impl ConlluDocument {
    /// Line indices of the word lines of each sentence, in order. Sentences
    /// without word lines are skipped.
    pub fn sentence_spans(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = Vec::new();
        for (i, l) in self.lines.iter().enumerate() {
            match l {
                ConlluLine::Blank => {
                    if !cur.is_empty() {
                        out.push(std::mem::take(&mut cur));
                    }
                }
                ConlluLine::Word(_) => cur.push(i),
                _ => {}
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
        out
    }

    pub fn sentences(&self) -> Vec<Sentence> {
        self.sentence_spans()
            .into_iter()
            .map(|span| {
                Sentence::new(
                    span.into_iter()
                        .map(|i| match &self.lines[i] {
                            ConlluLine::Word(f) => Token::new(f[FORM].clone(), canonical_tag(&f[UPOS], &f[FEATS])),
                            _ => unreachable!("spans hold word lines"),
                        })
                        .collect(),
                )
            })
            .collect()
    }

    pub fn forms(&self) -> Vec<Vec<String>> {
        self.sentences().iter().map(Sentence::forms).collect()
    }

    /// Rewrites UPOS and FEATS of the word at line `index` from a tag
    /// string.
    pub fn set_tag(&mut self, index: usize, tag: &str) -> Result<(), CorpusError> {
        let parsed = parse_tag(tag)?;
        match &mut self.lines[index] {
            ConlluLine::Word(f) => {
                f[UPOS] = parsed.pos.clone();
                f[FEATS] = parsed.feats_column();
                Ok(())
            }
            _ => Err(CorpusError::parse(index + 1, "not a word line")),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for l in &self.lines {
            match l {
                ConlluLine::Comment(c) => out.push_str(c),
                ConlluLine::Blank => {}
                ConlluLine::Word(f) | ConlluLine::Other(f) => out.push_str(&f.join("\t")),
            }
            out.push('\n');
        }
        out
    }
}

pub fn read_conllu(path: &Path) -> Result<Vec<Sentence>, CorpusError> {
    Ok(parse_conllu(&read_text(path)?)?.sentences())
}

/// Minimal CoNLL-U: ID, FORM, UPOS and FEATS filled, other columns `_`.
pub fn write_conllu(path: &Path, sentences: &[Sentence]) -> Result<(), CorpusError> {
    let mut out = String::new();
    for s in sentences {
        for (i, t) in s.tokens.iter().enumerate() {
            let p = parse_tag(&t.tag)?;
            out.push_str(&format!("{}\t{}\t_\t{}\t_\t{}\t_\t_\t_\t_\n", i + 1, t.form, p.pos, p.feats_column()));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "# sent_id = 1\n# text = The cats sleep\n\
1\tThe\tthe\tDET\tDT\tDefinite=Def|PronType=Art\t2\tdet\t_\t_\n\
2\tcats\tcat\tNOUN\tNNS\tNumber=Plur\t3\tnsubj\t_\t_\n\
3\tsleep\tsleep\tVERB\tVBP\t_\t0\troot\t_\t_\n\n";

    #[test]
    fn single_token_mapping() {
        let doc = parse_conllu("1\tcats\tcat\tNOUN\tNNS\tNumber=Plur\t0\troot\t_\t_\n").unwrap();
        assert_eq!(doc.sentences()[0].tokens[0], Token::new("cats", "NOUN|Number=Plur"));
    }

    #[test]
    fn fixture_with_comments() {
        let s = parse_conllu(FIXTURE).unwrap().sentences();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].len(), 3);
        assert_eq!(s[0].tokens[0].tag, "DET|Definite=Def|PronType=Art");
        assert_eq!(s[0].tokens[2].tag, "VERB");
    }

    #[test]
    fn multiword_and_empty_nodes_skipped() {
        let text = "1-2\tdu\t_\t_\t_\t_\t_\t_\t_\t_\n1\tde\tde\tADP\t_\t_\t0\troot\t_\t_\n\
2\tle\tle\tDET\t_\tGender=Masc\t1\tdet\t_\t_\n2.1\tx\t_\t_\t_\t_\t_\t_\t_\t_\n";
        let s = parse_conllu(text).unwrap().sentences();
        assert_eq!(s[0].forms(), vec!["de", "le"]);
    }

    #[test]
    fn malformed_line_reports_number() {
        let err = parse_conllu("# c\n1\tcats\tcat\tNOUN\n").unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn rewrite_preserves_other_columns() {
        let mut doc = parse_conllu(FIXTURE).unwrap();
        let spans = doc.sentence_spans();
        doc.set_tag(spans[0][1], "VERB|Person=3").unwrap();
        let out = doc.render();
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "# sent_id = 1");
        assert_eq!(lines[3], "2\tcats\tcat\tVERB\tNNS\tPerson=3\t3\tnsubj\t_\t_");
        assert_eq!(lines[2], FIXTURE.lines().nth(2).unwrap());
    }

    #[test]
    fn write_then_read_preserves_tags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.conllu");
        let s = parse_conllu(FIXTURE).unwrap().sentences();
        write_conllu(&path, &s).unwrap();
        assert_eq!(read_conllu(&path).unwrap(), s);
    }
}
