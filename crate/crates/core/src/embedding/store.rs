use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_dim, content_key, Embedder, UnitVector};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct StoreLine {
    key: String,
    dim: usize,
    vector: UnitVector,
}

/// Key → unit vector map with a uniform dimension. Doubles as the `file`
/// embedding provider, where keys are [`content_key`] digests of texts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    records: BTreeMap<String, UnitVector>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            records: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&UnitVector> {
        self.records.get(key)
    }

    pub fn contains_text(&self, text: &str) -> bool {
        self.records.contains_key(&content_key(text))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &UnitVector)> {
        self.records.iter()
    }

    /// Insert or replace. Fails on a dimension mismatch.
    pub fn insert(&mut self, key: impl Into<String>, v: UnitVector) -> Result<()> {
        if self.records.is_empty() && self.dim == 0 {
            self.dim = v.dim();
        }
        check_dim(self.dim, &v)?;
        self.records.insert(key.into(), v);
        Ok(())
    }

    pub fn insert_text(&mut self, text: &str, v: UnitVector) -> Result<()> {
        self.insert(content_key(text), v)
    }

    pub fn lookup_text(&self, text: &str) -> Result<&UnitVector> {
        let key = content_key(text);
        self.records.get(&key).ok_or(Error::MissingEmbedding(key))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut store = EmbeddingStore::default();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: StoreLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: e.to_string(),
            })?;
            if rec.dim != rec.vector.dim() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: format!("declared dim {} but vector has {}", rec.dim, rec.vector.dim()),
                });
            }
            if store.records.contains_key(&rec.key) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: format!("duplicate key {}", rec.key),
                });
            }
            store.insert(rec.key, rec.vector)?;
        }
        Ok(store)
    }

    /// Write one JSON object per record, sorted by key.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for (key, vector) in &self.records {
            let line = StoreLine {
                key: key.clone(),
                dim: vector.dim(),
                vector: vector.clone(),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }
}

impl Embedder for EmbeddingStore {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<UnitVector>> {
        texts.iter().map(|t| self.lookup_text(t).cloned()).collect()
    }
}
