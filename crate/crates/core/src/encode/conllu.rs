use std::path::Path;

use super::TokenSequence;
use crate::{Error, Result};

/// Parser arc between 0-based token positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawEdge {
    pub head: usize,
    pub dependent: usize,
    pub deprel: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedSentence {
    /// From a `# sent_id = …` comment, when present.
    pub sent_id: Option<String>,
    /// From a `# text = …` comment, when present.
    pub text: Option<String>,
    pub tokens: TokenSequence,
    pub edges: Vec<RawEdge>,
}

pub fn load_conllu(path: &Path) -> Result<Vec<ParsedSentence>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conllu(&text, path)
}

/// Writes parses as CoNLL-U with `sent_id` and `text` comments. Tokens
/// without an incoming arc become roots; unused columns hold `_`.
pub fn write_conllu(parses: &[ParsedSentence], path: &Path) -> Result<()> {
    let mut out = String::new();
    for p in parses {
        if let Some(id) = &p.sent_id {
            out.push_str(&format!("# sent_id = {id}\n"));
        }
        if let Some(text) = &p.text {
            out.push_str(&format!("# text = {text}\n"));
        }
        for (i, form) in p.tokens.tokens.iter().enumerate() {
            let (head, rel) = match p.edges.iter().find(|e| e.dependent == i) {
                Some(e) => (e.head + 1, e.deprel.as_str()),
                None => (0, "root"),
            };
            out.push_str(&format!("{}\t{form}\t_\t_\t_\t_\t{head}\t{rel}\t_\t_\n", i + 1));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parses CoNLL-U text. Only ID, FORM, HEAD and DEPREL are used; multiword
/// ranges (`1-2`) and empty nodes (`1.1`) are skipped.
pub fn parse_conllu(text: &str, path: &Path) -> Result<Vec<ParsedSentence>> {
    let mut out = Vec::new();
    let mut block = Block::default();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if let Some(s) = block.finish() {
                out.push(s);
            }
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                match key.trim() {
                    "sent_id" => block.sent_id = Some(value.trim().to_string()),
                    "text" => block.text = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let err = |field: &str, message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            field: field.to_string(),
            message,
        };
        if cols.len() != 10 {
            return Err(err("<row>", format!("expected 10 tab-separated columns, found {}", cols.len())));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let id: usize = cols[0]
            .parse()
            .map_err(|_| err("ID", format!("not an integer: {:?}", cols[0])))?;
        let head: usize = cols[6]
            .parse()
            .map_err(|_| err("HEAD", format!("not an integer: {:?}", cols[6])))?;
        if id != block.forms.len() + 1 {
            return Err(err("ID", format!("expected {}, found {id}", block.forms.len() + 1)));
        }
        block.forms.push(cols[1].to_string());
        if head != 0 {
            block.edges.push(RawEdge {
                head: head - 1,
                dependent: id - 1,
                deprel: cols[7].to_string(),
            });
        }
    }
    if let Some(s) = block.finish() {
        out.push(s);
    }
    for s in &out {
        if let Some(e) = s.edges.iter().find(|e| e.head >= s.tokens.len()) {
            return Err(Error::Data(format!(
                "sentence {:?}: head {} beyond {} tokens",
                s.sent_id,
                e.head + 1,
                s.tokens.len()
            )));
        }
    }
    Ok(out)
}

#[derive(Default)]
struct Block {
    sent_id: Option<String>,
    text: Option<String>,
    forms: Vec<String>,
    edges: Vec<RawEdge>,
}

impl Block {
    fn finish(&mut self) -> Option<ParsedSentence> {
        let block = std::mem::take(self);
        if block.forms.is_empty() {
            return None;
        }
        let joined;
        let text = match &block.text {
            Some(t) => t.as_str(),
            None => {
                joined = block.forms.join(" ");
                joined.as_str()
            }
        };
        let tokens = super::align_tokens(text, &block.forms);
        Some(ParsedSentence {
            sent_id: block.sent_id,
            text: block.text,
            tokens,
            edges: block.edges,
        })
    }
}
