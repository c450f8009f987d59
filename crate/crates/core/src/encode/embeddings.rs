use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};

use crate::{Error, Result};

/// Static word vectors keyed by lower-cased token.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    index: HashMap<String, usize>,
    vectors: Array2<f32>,
}

impl EmbeddingTable {
    /// Builds a table from `(token, vector)` pairs. The first occurrence of a
    /// case-folded token wins.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (String, Vec<f32>)>) -> Result<Self> {
        let mut index = HashMap::new();
        let mut flat = Vec::new();
        for (token, v) in pairs {
            if v.len() != dim {
                return Err(Error::shape(format!("{dim} values for {token:?}"), v.len().to_string()));
            }
            let key = token.to_lowercase();
            if index.contains_key(&key) {
                continue;
            }
            index.insert(key, index.len());
            flat.extend(v);
        }
        let rows = index.len();
        let vectors = Array2::from_shape_vec((rows, dim), flat).expect("rows * dim values");
        Ok(Self { index, vectors })
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<ArrayView1<'_, f32>> {
        self.index
            .get(&token.to_lowercase())
            .map(|&i| self.vectors.row(i))
    }

    /// Vector for `token`, or zeros with the OOV flag set.
    pub fn lookup(&self, token: &str) -> (Vec<f32>, bool) {
        match self.get(token) {
            Some(v) => (v.to_vec(), false),
            None => (vec![0.0; self.dim()], true),
        }
    }

    /// Tokens in insertion order with their vectors.
    pub fn iter(&self) -> impl Iterator<Item = (&str, ArrayView1<'_, f32>)> {
        let mut keys: Vec<(&String, &usize)> = self.index.iter().collect();
        keys.sort_by_key(|(_, &i)| i);
        keys.into_iter().map(|(k, &i)| (k.as_str(), self.vectors.row(i)))
    }

    /// The sub-table covering `tokens` (case-folded), in table order.
    pub fn restricted<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let wanted: std::collections::HashSet<String> = tokens.into_iter().map(str::to_lowercase).collect();
        let pairs = self
            .iter()
            .filter(|(t, _)| wanted.contains(*t))
            .map(|(t, v)| (t.to_string(), v.to_vec()));
        Self::from_pairs(self.dim(), pairs).expect("rows keep the table width")
    }
}

/// Writes the table as `token v1 … vd` lines readable by
/// [`load_static_embeddings`].
pub fn write_static_embeddings(table: &EmbeddingTable, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (token, v) in table.iter() {
        write!(w, "{token}").map_err(|e| Error::io(path, e))?;
        for x in v {
            write!(w, " {x}").map_err(|e| Error::io(path, e))?;
        }
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `token v1 … vd` lines. A leading `count dim` header line is skipped.
pub fn load_static_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dim: Option<usize> = None;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        if i == 0 && rest.len() == 1 && token.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok() {
            continue;
        }
        let values = rest
            .iter()
            .enumerate()
            .map(|(k, s)| {
                s.parse::<f32>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    field: format!("component {}", k + 1),
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<f32>>>()?;
        let width = *dim.get_or_insert(values.len());
        if values.len() != width || width == 0 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                field: "vector".into(),
                message: format!("expected {width} components, found {}", values.len()),
            });
        }
        pairs.push((token.to_string(), values));
    }
    EmbeddingTable::from_pairs(dim.unwrap_or(0), pairs)
}
