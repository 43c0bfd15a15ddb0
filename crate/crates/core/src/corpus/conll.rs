//! Two-column `token<TAB>tag` files with blank-line sentence breaks.
//!
//! A block may be preceded by a `# id = <source id>` line carrying the
//! sentence's source identifier (typically a CVE id).

use super::{Tag, TaggedSentence};
use crate::error::{Error, Result};

const ID_PREFIX: &str = "# id = ";

/// Column separator accepted by the parser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    #[default]
    Tab,
    /// Any run of spaces or tabs.
    Whitespace,
}

pub fn parse_conll(text: &str) -> Result<Vec<TaggedSentence>> {
    parse_conll_with(text, Delimiter::Tab)
}

pub fn parse_conll_with(text: &str, delimiter: Delimiter) -> Result<Vec<TaggedSentence>> {
    let mut out = Vec::new();
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let mut source_id: Option<String> = None;

    let mut flush = |tokens: &mut Vec<String>,
                     tags: &mut Vec<Tag>,
                     source_id: &mut Option<String>,
                     line: usize|
     -> Result<()> {
        if tokens.is_empty() {
            *source_id = None;
            return Ok(());
        }
        let mut s = TaggedSentence::new(std::mem::take(tokens), std::mem::take(tags))
            .map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
        if let Some(id) = source_id.take() {
            s = s.with_source_id(id);
        }
        out.push(s);
        Ok(())
    };

    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            flush(&mut tokens, &mut tags, &mut source_id, line_no)?;
            continue;
        }
        if tokens.is_empty() && !line.contains('\t') {
            if let Some(id) = line.strip_prefix(ID_PREFIX) {
                source_id = Some(id.trim().to_string());
                continue;
            }
        }
        let cols: Vec<&str> = match delimiter {
            Delimiter::Tab => line.split('\t').collect(),
            Delimiter::Whitespace => line.split_whitespace().collect(),
        };
        if cols.len() != 2 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 2 columns, found {}", cols.len()),
            });
        }
        let tag = cols[1].parse::<Tag>().map_err(|_| Error::UnknownTag {
            line: line_no,
            tag: cols[1].to_string(),
        })?;
        tokens.push(cols[0].to_string());
        tags.push(tag);
    }
    flush(&mut tokens, &mut tags, &mut source_id, last_line)?;
    Ok(out)
}

pub fn serialize_conll(sentences: &[TaggedSentence]) -> String {
    let mut out = String::new();
    for (i, s) in sentences.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        if let Some(id) = s.source_id() {
            out.push_str(ID_PREFIX);
            out.push_str(id);
            out.push('\n');
        }
        for (tok, tag) in s.tokens().iter().zip(s.tags()) {
            out.push_str(tok);
            out.push('\t');
            out.push_str(tag.as_str());
            out.push('\n');
        }
    }
    out
}
