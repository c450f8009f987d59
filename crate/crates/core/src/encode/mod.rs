//! Sentence encoding: tokens, the embedded matrix `S0`, and the labeled
//! dependency graph.

mod conllu;
mod embeddings;
mod graph;
mod sidecar;

use ndarray::Array2;

use crate::corpus::EntitySpan;
use crate::{Error, Result};

pub use conllu::{load_conllu, parse_conllu, write_conllu, ParsedSentence, RawEdge};
pub use embeddings::{load_static_embeddings, write_static_embeddings, EmbeddingTable};
pub use graph::{build_graph, DependencyGraph, Direction, Edge, EdgeIndex, LabelVocab, SELF_LABEL};
pub use sidecar::{ContextualSidecar, SidecarEntry, SidecarWriter};

/// Tokens with their character spans in the source sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    /// Half-open character ranges, non-overlapping and increasing.
    pub char_spans: Vec<(usize, usize)>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Inclusive token range covering every token that shares at least one
    /// character with `span`.
    pub fn token_range(&self, span: &EntitySpan) -> Option<(usize, usize)> {
        let hits: Vec<usize> = self
            .char_spans
            .iter()
            .enumerate()
            .filter(|(_, &(s, e))| s < span.end && span.start < e)
            .map(|(i, _)| i)
            .collect();
        Some((*hits.first()?, *hits.last()?))
    }
}

/// Whitespace and punctuation tokenizer. Runs of alphanumeric characters
/// (and `_`) form a token; every other non-space character stands alone.
pub fn tokenize(sentence: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    let mut char_spans = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    for (i, ch) in sentence.chars().enumerate() {
        if ch.is_alphanumeric() || ch == '_' {
            if current.is_empty() {
                start = i;
            }
            current.push(ch);
            continue;
        }
        if !current.is_empty() {
            char_spans.push((start, i));
            tokens.push(std::mem::take(&mut current));
        }
        if !ch.is_whitespace() {
            tokens.push(ch.to_string());
            char_spans.push((i, i + 1));
        }
    }
    if !current.is_empty() {
        char_spans.push((start, start + current.chars().count()));
        tokens.push(current);
    }
    TokenSequence { tokens, char_spans }
}

/// Locates externally produced token forms (e.g. a CoNLL-U FORM column) in
/// `sentence`, left to right. A form that cannot be found gets an empty span
/// at the current position and so never overlaps an entity.
pub fn align_tokens(sentence: &str, forms: &[String]) -> TokenSequence {
    let chars: Vec<char> = sentence.chars().collect();
    let mut cursor = 0;
    let mut char_spans = Vec::with_capacity(forms.len());
    for form in forms {
        let pat: Vec<char> = form.chars().collect();
        let found = if pat.is_empty() || pat.len() > chars.len() {
            None
        } else {
            (cursor..=chars.len() - pat.len()).find(|&s| chars[s..s + pat.len()] == pat[..])
        };
        match found {
            Some(s) => {
                char_spans.push((s, s + pat.len()));
                cursor = s + pat.len();
            }
            None => char_spans.push((cursor, cursor)),
        }
    }
    TokenSequence {
        tokens: forms.to_vec(),
        char_spans,
    }
}

/// Inclusive token range of an entity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TokenSpan {
    pub first: usize,
    pub last: usize,
}

impl TokenSpan {
    pub fn new(first: usize, last: usize) -> Self {
        Self { first, last }
    }

    pub fn positions(&self) -> Vec<usize> {
        (self.first..=self.last).collect()
    }
}

/// `S0` with resolved entity positions.
#[derive(Clone, Debug)]
pub struct EmbeddedSentence {
    pub vectors: Array2<f32>,
    pub entity_token_spans: Vec<TokenSpan>,
    pub oov: Vec<bool>,
}

impl EmbeddedSentence {
    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }
}

/// Resolves entity character spans to token ranges.
pub fn resolve_entities(id: &str, toks: &TokenSequence, entities: &[EntitySpan]) -> Result<Vec<TokenSpan>> {
    entities
        .iter()
        .map(|e| {
            toks.token_range(e)
                .map(|(a, b)| TokenSpan::new(a, b))
                .ok_or_else(|| Error::Validation {
                    id: id.to_string(),
                    message: format!("entity {:?} ({}, {}) intersects no token", e.text, e.start, e.end),
                })
        })
        .collect()
}

/// Looks every token up in `table` (zero row plus OOV flag when missing).
pub fn embed_sentence(
    id: &str,
    toks: &TokenSequence,
    table: &EmbeddingTable,
    entities: &[EntitySpan],
) -> Result<EmbeddedSentence> {
    let entity_token_spans = resolve_entities(id, toks, entities)?;
    let mut vectors = Array2::zeros((toks.len(), table.dim()));
    let mut oov = Vec::with_capacity(toks.len());
    for (i, tok) in toks.tokens.iter().enumerate() {
        match table.get(tok) {
            Some(row) => {
                vectors.row_mut(i).assign(&row);
                oov.push(false);
            }
            None => oov.push(true),
        }
    }
    Ok(EmbeddedSentence {
        vectors,
        entity_token_spans,
        oov,
    })
}

/// Averages wordpiece vectors into word vectors. `piece_to_word[k]` names the
/// word of piece `k`; `None` marks boundary tokens, which are dropped.
pub fn pool_wordpieces(
    pieces: &Array2<f32>,
    piece_to_word: &[Option<usize>],
    n_words: usize,
) -> Result<Array2<f32>> {
    if pieces.nrows() != piece_to_word.len() {
        return Err(Error::shape(
            format!("{} alignment entries", pieces.nrows()),
            piece_to_word.len().to_string(),
        ));
    }
    let mut sums = Array2::<f64>::zeros((n_words, pieces.ncols()));
    let mut counts = vec![0usize; n_words];
    for (k, word) in piece_to_word.iter().enumerate() {
        let Some(w) = *word else { continue };
        if w >= n_words {
            return Err(Error::Data(format!("piece {k} aligned to word {w} of {n_words}")));
        }
        let mut row = sums.row_mut(w);
        row += &pieces.row(k).mapv(f64::from);
        counts[w] += 1;
    }
    if let Some(w) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Data(format!("word {w} has no aligned wordpieces")));
    }
    let mut out = Array2::zeros((n_words, pieces.ncols()));
    for (w, &c) in counts.iter().enumerate() {
        out.row_mut(w)
            .assign(&sums.row(w).mapv(|v| (v / c as f64) as f32));
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
