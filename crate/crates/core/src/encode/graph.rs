use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{RawEdge, TokenSequence};
use crate::{Error, Result};

pub const SELF_LABEL: &str = "self";
const UNK: &str = "<unk>";

/// Edge direction class. Each has its own SGCN weight matrix and gate vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    /// Head to dependent, as produced by the parser.
    Out,
    /// Dependent back to head.
    Inv,
    SelfLoop,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::Out, Direction::Inv, Direction::SelfLoop];

    pub fn index(self) -> usize {
        self as usize
    }

    fn tag(self) -> &'static str {
        match self {
            Direction::Out => "OUT",
            Direction::Inv => "INV",
            Direction::SelfLoop => "SELF",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// A message-passing edge: information flows from `source` to `target`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub dep_type: String,
    pub direction: Direction,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DependencyGraph {
    pub n: usize,
    pub edges: Vec<Edge>,
}

/// Dense integer view of a graph for the SGCN layers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeIndex {
    pub n: usize,
    pub sources: Vec<usize>,
    pub targets: Vec<usize>,
    pub directions: Vec<usize>,
    pub labels: Vec<usize>,
}

impl EdgeIndex {
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    /// Number of edges delivering messages into each vertex.
    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &t in &self.targets {
            deg[t] += 1;
        }
        deg
    }
}

impl DependencyGraph {
    /// Expands parser arcs into OUT/INV twins and adds one self loop per
    /// vertex.
    pub fn from_raw(n: usize, raw: &[RawEdge]) -> Result<Self> {
        let mut edges = Vec::with_capacity(2 * raw.len() + n);
        for e in raw {
            if e.head >= n || e.dependent >= n {
                return Err(Error::Data(format!(
                    "edge {} -> {} ({}) dangles outside {n} vertices",
                    e.head, e.dependent, e.deprel
                )));
            }
            edges.push(Edge {
                source: e.head,
                target: e.dependent,
                dep_type: e.deprel.clone(),
                direction: Direction::Out,
            });
            edges.push(Edge {
                source: e.dependent,
                target: e.head,
                dep_type: e.deprel.clone(),
                direction: Direction::Inv,
            });
        }
        for v in 0..n {
            edges.push(Edge {
                source: v,
                target: v,
                dep_type: SELF_LABEL.to_string(),
                direction: Direction::SelfLoop,
            });
        }
        Ok(Self { n, edges })
    }

    /// A left-to-right chain with `next` arcs, for text without a parse.
    pub fn chain(n: usize) -> Self {
        let raw: Vec<RawEdge> = (1..n)
            .map(|i| RawEdge {
                head: i - 1,
                dependent: i,
                deprel: "next".into(),
            })
            .collect();
        Self::from_raw(n, &raw).expect("chain edges are in range")
    }

    pub fn index(&self, vocab: &LabelVocab) -> EdgeIndex {
        let mut idx = EdgeIndex {
            n: self.n,
            sources: Vec::with_capacity(self.edges.len()),
            targets: Vec::with_capacity(self.edges.len()),
            directions: Vec::with_capacity(self.edges.len()),
            labels: Vec::with_capacity(self.edges.len()),
        };
        for e in &self.edges {
            idx.sources.push(e.source);
            idx.targets.push(e.target);
            idx.directions.push(e.direction.index());
            idx.labels.push(vocab.id(e.direction, &e.dep_type));
        }
        idx
    }

    /// Same graph with vertex `v` renamed to `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            n: self.n,
            edges: self
                .edges
                .iter()
                .map(|e| Edge {
                    source: perm[e.source],
                    target: perm[e.target],
                    ..e.clone()
                })
                .collect(),
        }
    }
}

/// Builds the graph and records its labels in `vocab`.
pub fn build_graph(toks: &TokenSequence, raw: &[RawEdge], vocab: &mut LabelVocab) -> Result<DependencyGraph> {
    let graph = DependencyGraph::from_raw(toks.len(), raw)?;
    vocab.observe(&graph);
    Ok(graph)
}

/// Dense ids for `(direction, dependency type)` labels. Id 0 is reserved for
/// labels never seen while building the vocabulary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct LabelVocab {
    names: Vec<String>,
    ids: HashMap<String, usize>,
}

fn key(direction: Direction, dep_type: &str) -> String {
    format!("{}:{dep_type}", direction.tag())
}

impl Default for LabelVocab {
    fn default() -> Self {
        Self::new()
    }
}

impl LabelVocab {
    pub const UNK: usize = 0;

    pub fn new() -> Self {
        let mut v = Self {
            names: Vec::new(),
            ids: HashMap::new(),
        };
        v.names.push(UNK.to_string());
        v.ids.insert(UNK.to_string(), 0);
        v.insert(Direction::SelfLoop, SELF_LABEL);
        v
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn insert(&mut self, direction: Direction, dep_type: &str) -> usize {
        let k = key(direction, dep_type);
        if let Some(&id) = self.ids.get(&k) {
            return id;
        }
        let id = self.names.len();
        self.names.push(k.clone());
        self.ids.insert(k, id);
        id
    }

    pub fn observe(&mut self, graph: &DependencyGraph) {
        for e in &graph.edges {
            self.insert(e.direction, &e.dep_type);
        }
    }

    pub fn contains(&self, direction: Direction, dep_type: &str) -> bool {
        self.ids.contains_key(&key(direction, dep_type))
    }

    /// Label id, or [`LabelVocab::UNK`] for an unseen label.
    pub fn id(&self, direction: Direction, dep_type: &str) -> usize {
        self.ids
            .get(&key(direction, dep_type))
            .copied()
            .unwrap_or(Self::UNK)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

impl From<Vec<String>> for LabelVocab {
    fn from(names: Vec<String>) -> Self {
        let ids = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Self { names, ids }
    }
}

impl From<LabelVocab> for Vec<String> {
    fn from(v: LabelVocab) -> Self {
        v.names
    }
}
