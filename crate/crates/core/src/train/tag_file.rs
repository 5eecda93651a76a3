use std::path::Path;

use super::{Model, TrainError};
use crate::corpus::{is_conllu, parse_conllu, read_text, write_text, CorpusError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TagFormat {
    /// One form per line (an existing second column is replaced), blank
    /// lines between sentences.
    Tsv,
    Conllu,
}

impl TagFormat {
    pub fn from_path(path: &Path) -> Self {
        if is_conllu(path) {
            TagFormat::Conllu
        } else {
            TagFormat::Tsv
        }
    }
}

/// Tags pre-tokenized text. TSV output has one `form<TAB>tag` line per
/// input form line and keeps blank lines where they were; CoNLL-U output
/// only has UPOS and FEATS rewritten.
pub fn tag_text(model: &Model, text: &str, format: TagFormat) -> Result<String, TrainError> {
    match format {
        TagFormat::Conllu => {
            let mut doc = parse_conllu(text)?;
            let spans = doc.sentence_spans();
            let tags = model.predict(&doc.forms())?;
            for (span, tags) in spans.iter().zip(tags) {
                for (&line, tag) in span.iter().zip(tags) {
                    doc.set_tag(line, &tag)?;
                }
            }
            Ok(doc.render())
        }
        TagFormat::Tsv => {
            let lines: Vec<&str> = text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l)).collect();
            let mut sentences: Vec<Vec<String>> = Vec::new();
            let mut cur = Vec::new();
            for (i, line) in lines.iter().enumerate() {
                if line.is_empty() {
                    if !cur.is_empty() {
                        sentences.push(std::mem::take(&mut cur));
                    }
                    continue;
                }
                let mut fields = line.split('\t');
                let form = fields.next().unwrap_or_default();
                if form.is_empty() || fields.count() > 1 {
                    return Err(CorpusError::Parse { line: i + 1, msg: "expected `form` or `form<TAB>tag`".into() }.into());
                }
                cur.push(form.to_string());
            }
            if !cur.is_empty() {
                sentences.push(cur);
            }
            let tags = model.predict(&sentences)?;
            let mut flat = tags.iter().flatten();
            let mut out = String::with_capacity(text.len() * 2);
            for line in lines {
                if !line.is_empty() {
                    let form = line.split('\t').next().unwrap_or_default();
                    out.push_str(form);
                    out.push('\t');
                    out.push_str(flat.next().expect("one tag per form"));
                }
                out.push('\n');
            }
            Ok(out)
        }
    }
}

/// Tags `input` into `output`; the format follows the input file name
/// unless given.
pub fn tag_file(model: &Model, input: &Path, output: &Path, format: Option<TagFormat>) -> Result<(), TrainError> {
    let format = format.unwrap_or_else(|| TagFormat::from_path(input));
    let text = read_text(input)?;
    write_text(output, &tag_text(model, &text, format)?)?;
    Ok(())
}
