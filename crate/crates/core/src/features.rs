//! Turns corpus instances into model inputs: tokens, `S0`, graph and spans.

use std::collections::HashMap;

use crate::corpus::{AbsaInstance, CpcInstance, EntitySpan};
use crate::encode::{
    resolve_entities, tokenize, ContextualSidecar, DependencyGraph, EmbeddingTable, LabelVocab, ParsedSentence,
    TokenSequence,
};
use crate::model::{AbsaExample, CpcExample, SentenceInput};
use crate::{Error, Result};

pub enum VectorSource {
    /// Word vectors looked up per token.
    Static(EmbeddingTable),
    /// Precomputed per-token vectors keyed by instance id.
    Contextual(ContextualSidecar),
}

/// Encodes instances against one vector source, optional parses, and a
/// growing label vocabulary.
pub struct Featurizer {
    pub source: VectorSource,
    parses: HashMap<String, ParsedSentence>,
    pub vocab: LabelVocab,
    /// Sentences that had no parse and fell back to a chain graph.
    pub unparsed: usize,
    d0: Option<usize>,
}

fn base_id(id: &str) -> &str {
    id.split('#').next().unwrap_or(id)
}

impl Featurizer {
    pub fn new(source: VectorSource) -> Self {
        let d0 = match &source {
            VectorSource::Static(t) => Some(t.dim()),
            VectorSource::Contextual(_) => None,
        };
        Self {
            source,
            parses: HashMap::new(),
            vocab: LabelVocab::new(),
            unparsed: 0,
            d0,
        }
    }

    /// Registers parses, keyed by `sent_id` when present and otherwise by the
    /// sentence text.
    pub fn with_parses(mut self, parses: impl IntoIterator<Item = ParsedSentence>) -> Self {
        for p in parses {
            let key = p
                .sent_id
                .clone()
                .or_else(|| p.text.clone())
                .unwrap_or_else(|| p.tokens.tokens.join(" "));
            self.parses.insert(key, p);
        }
        self
    }

    pub fn with_vocab(mut self, vocab: LabelVocab) -> Self {
        self.vocab = vocab;
        self
    }

    pub fn num_parses(&self) -> usize {
        self.parses.len()
    }

    /// Input width, known once a static table is used or a first sidecar
    /// record has been read.
    pub fn d0(&self) -> Option<usize> {
        self.d0
    }

    fn parse_for(&self, id: &str, sentence: &str) -> Option<&ParsedSentence> {
        self.parses
            .get(id)
            .or_else(|| self.parses.get(base_id(id)))
            .or_else(|| self.parses.get(sentence))
    }

    /// Encodes one sentence. `spans` are returned in the given order. With
    /// `grow` set, unseen dependency labels are added to the vocabulary;
    /// otherwise they map to UNK.
    pub fn sentence(&mut self, id: &str, sentence: &str, spans: &[&EntitySpan], grow: bool) -> Result<SentenceInput> {
        let (toks, graph) = match self.parse_for(id, sentence) {
            Some(p) => (p.tokens.clone(), DependencyGraph::from_raw(p.tokens.len(), &p.edges)?),
            None => {
                self.unparsed += 1;
                let toks = tokenize(sentence);
                let g = DependencyGraph::chain(toks.len());
                (toks, g)
            }
        };
        if toks.is_empty() {
            return Err(Error::Validation {
                id: id.to_string(),
                message: "sentence has no tokens".into(),
            });
        }
        if grow {
            self.vocab.observe(&graph);
        }
        let owned: Vec<EntitySpan> = spans.iter().map(|s| (*s).clone()).collect();
        let token_spans = resolve_entities(id, &toks, &owned)?;
        let vectors = self.vectors(id, &toks)?;
        Ok(SentenceInput {
            id: id.to_string(),
            vectors,
            edges: graph.index(&self.vocab),
            spans: token_spans,
        })
    }

    fn vectors(&mut self, id: &str, toks: &TokenSequence) -> Result<ndarray::Array2<f32>> {
        match &self.source {
            VectorSource::Static(table) => {
                let mut m = ndarray::Array2::zeros((toks.len(), table.dim()));
                for (i, t) in toks.tokens.iter().enumerate() {
                    if let Some(row) = table.get(t) {
                        m.row_mut(i).assign(&row);
                    }
                }
                Ok(m)
            }
            VectorSource::Contextual(sidecar) => {
                let key = if sidecar.entry(id).is_some() { id } else { base_id(id) };
                let m = sidecar.get(key)?;
                if m.nrows() != toks.len() {
                    return Err(Error::shape(
                        format!("{} sidecar rows for {id:?}", toks.len()),
                        m.nrows().to_string(),
                    ));
                }
                match self.d0 {
                    Some(d) if d != m.ncols() => {
                        return Err(Error::shape(format!("{d}-wide sidecar vectors"), m.ncols().to_string()))
                    }
                    _ => self.d0 = Some(m.ncols()),
                }
                Ok(m)
            }
        }
    }

    /// Spans are stored in query order, so a swapped instance queries
    /// `(entity_b, entity_a)`.
    pub fn cpc(&mut self, inst: &CpcInstance, grow: bool) -> Result<CpcExample> {
        let (e1, e2) = inst.query_order();
        Ok(CpcExample {
            input: self.sentence(&inst.id, &inst.sentence, &[e1, e2], grow)?,
            label: inst.label,
        })
    }

    pub fn absa(&mut self, inst: &AbsaInstance, grow: bool) -> Result<AbsaExample> {
        Ok(AbsaExample {
            input: self.sentence(&inst.id, &inst.sentence, &[&inst.aspect], grow)?,
            sentiment: inst.sentiment,
            domain: inst.domain,
        })
    }

    pub fn cpc_all(&mut self, data: &[CpcInstance], grow: bool) -> Result<Vec<CpcExample>> {
        data.iter().map(|i| self.cpc(i, grow)).collect()
    }

    pub fn absa_all(&mut self, data: &[AbsaInstance], grow: bool) -> Result<Vec<AbsaExample>> {
        data.iter().map(|i| self.absa(i, grow)).collect()
    }
}
