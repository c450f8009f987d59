use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Location of one instance's `n × d0` block inside the data file. `offset`
/// is in bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidecarEntry {
    pub offset: u64,
    pub n: usize,
    pub d0: usize,
}

fn paths(prefix: &Path) -> (PathBuf, PathBuf) {
    (prefix.with_extension("json"), prefix.with_extension("bin"))
}

/// Precomputed per-token vectors: `<prefix>.bin` holds little-endian f32
/// rows, `<prefix>.json` maps instance id to a [`SidecarEntry`].
#[derive(Debug)]
pub struct ContextualSidecar {
    data_path: PathBuf,
    index: BTreeMap<String, SidecarEntry>,
}

impl ContextualSidecar {
    pub fn open(prefix: &Path) -> Result<Self> {
        let (index_path, data_path) = paths(prefix);
        let text = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
        let index: BTreeMap<String, SidecarEntry> = serde_json::from_str(&text)?;
        let len = std::fs::metadata(&data_path)
            .map_err(|e| Error::io(&data_path, e))?
            .len();
        for (id, e) in &index {
            let end = e.offset + (e.n * e.d0 * 4) as u64;
            if end > len {
                return Err(Error::Data(format!(
                    "sidecar entry {id:?} ends at byte {end}, data file has {len}"
                )));
            }
        }
        Ok(Self { data_path, index })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn entry(&self, id: &str) -> Option<SidecarEntry> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Result<Array2<f32>> {
        let e = self
            .entry(id)
            .ok_or_else(|| Error::Data(format!("no sidecar vectors for instance {id:?}")))?;
        let mut file = File::open(&self.data_path).map_err(|err| Error::io(&self.data_path, err))?;
        file.seek(SeekFrom::Start(e.offset))
            .map_err(|err| Error::io(&self.data_path, err))?;
        let mut bytes = vec![0u8; e.n * e.d0 * 4];
        file.read_exact(&mut bytes)
            .map_err(|err| Error::io(&self.data_path, err))?;
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Array2::from_shape_vec((e.n, e.d0), values).expect("n * d0 values"))
    }
}

pub struct SidecarWriter {
    index_path: PathBuf,
    data_path: PathBuf,
    data: BufWriter<File>,
    offset: u64,
    index: BTreeMap<String, SidecarEntry>,
}

impl SidecarWriter {
    pub fn create(prefix: &Path) -> Result<Self> {
        let (index_path, data_path) = paths(prefix);
        let file = File::create(&data_path).map_err(|e| Error::io(&data_path, e))?;
        Ok(Self {
            index_path,
            data_path,
            data: BufWriter::new(file),
            offset: 0,
            index: BTreeMap::new(),
        })
    }

    pub fn push(&mut self, id: &str, vectors: &Array2<f32>) -> Result<()> {
        if self.index.contains_key(id) {
            return Err(Error::Data(format!("duplicate sidecar id {id:?}")));
        }
        let (n, d0) = vectors.dim();
        for v in vectors.iter() {
            self.data
                .write_all(&v.to_le_bytes())
                .map_err(|e| Error::io(&self.data_path, e))?;
        }
        self.index.insert(id.to_string(), SidecarEntry { offset: self.offset, n, d0 });
        self.offset += (n * d0 * 4) as u64;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.data.flush().map_err(|e| Error::io(&self.data_path, e))?;
        let json = serde_json::to_string_pretty(&self.index)?;
        std::fs::write(&self.index_path, json).map_err(|e| Error::io(&self.index_path, e))
    }
}
