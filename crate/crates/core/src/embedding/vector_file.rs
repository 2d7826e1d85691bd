//! Precomputed vector files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! u32 model_id length | model_id (UTF-8) | u32 dim | u64 count
//! count × ( [u8; 32] sha256 of text | dim × f32 )
//! ```

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{content_hash, ContentHash, EmbedRequest, EmbedResponse, EmbeddingProvider};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct VectorTable {
    pub model_id: String,
    pub dim: usize,
    pub vectors: HashMap<ContentHash, Vec<f32>>,
}

impl VectorTable {
    pub fn new(model_id: impl Into<String>, dim: usize) -> Self {
        VectorTable { model_id: model_id.into(), dim, vectors: HashMap::new() }
    }

    pub fn insert_text(&mut self, text: &str, values: Vec<f32>) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, actual: values.len() });
        }
        self.vectors.insert(content_hash(text), values);
        Ok(())
    }
}

pub fn write_vector_file<W: Write>(mut w: W, table: &VectorTable) -> std::io::Result<()> {
    let id = table.model_id.as_bytes();
    w.write_all(&(id.len() as u32).to_le_bytes())?;
    w.write_all(id)?;
    w.write_all(&(table.dim as u32).to_le_bytes())?;
    w.write_all(&(table.vectors.len() as u64).to_le_bytes())?;
    // sorted for byte-stable output
    let mut keys: Vec<&ContentHash> = table.vectors.keys().collect();
    keys.sort();
    for k in keys {
        w.write_all(k)?;
        for v in &table.vectors[k] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn read_vector_file<R: Read>(mut r: R) -> Result<VectorTable> {
    let bad = |what: &str| Error::Invalid(format!("vector file: {what}"));
    let mut u32buf = [0u8; 4];
    let mut u64buf = [0u8; 8];
    let io = |e: std::io::Error| Error::io("<vector file>", e);

    r.read_exact(&mut u32buf).map_err(io)?;
    let id_len = u32::from_le_bytes(u32buf) as usize;
    if id_len > 4096 {
        return Err(bad("model id too long"));
    }
    let mut id = vec![0u8; id_len];
    r.read_exact(&mut id).map_err(io)?;
    let model_id = String::from_utf8(id).map_err(|_| bad("model id is not UTF-8"))?;
    r.read_exact(&mut u32buf).map_err(io)?;
    let dim = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u64buf).map_err(io)?;
    let count = u64::from_le_bytes(u64buf);

    let mut table = VectorTable::new(model_id, dim);
    let mut row = vec![0u8; dim * 4];
    for _ in 0..count {
        let mut hash = [0u8; 32];
        r.read_exact(&mut hash).map_err(io)?;
        r.read_exact(&mut row).map_err(io)?;
        let values = row.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        table.vectors.insert(hash, values);
    }
    Ok(table)
}

/// Serves vectors from precomputed files, one table per model.
#[derive(Debug, Default)]
pub struct VectorFileProvider {
    tables: HashMap<String, VectorTable>,
    source: String,
}

impl VectorFileProvider {
    pub fn new(tables: impl IntoIterator<Item = VectorTable>) -> Self {
        let tables: HashMap<_, _> = tables.into_iter().map(|t| (t.model_id.clone(), t)).collect();
        VectorFileProvider { tables, source: "vector-files".into() }
    }

    pub fn open(paths: &[impl AsRef<Path>]) -> Result<Self> {
        let mut tables = Vec::new();
        for p in paths {
            let p = p.as_ref();
            let f = std::fs::File::open(p).map_err(|e| Error::io(p, e))?;
            tables.push(read_vector_file(std::io::BufReader::new(f))?);
        }
        let mut provider = Self::new(tables);
        provider.source = paths.iter().map(|p| p.as_ref().display().to_string()).collect::<Vec<_>>().join(",");
        Ok(provider)
    }
}

impl EmbeddingProvider for VectorFileProvider {
    fn endpoint(&self) -> String {
        self.source.clone()
    }

    fn embed(&self, request: &EmbedRequest) -> Result<EmbedResponse> {
        let unavailable = |reason: String| Error::ProviderUnavailable { endpoint: self.source.clone(), reason };
        let table = self
            .tables
            .get(&request.model_id)
            .ok_or_else(|| unavailable(format!("no vectors for model `{}`", request.model_id)))?;
        let vectors = request
            .texts
            .iter()
            .map(|t| {
                table
                    .vectors
                    .get(&content_hash(t))
                    .cloned()
                    .ok_or_else(|| unavailable(format!("no vector for text `{t}`")))
            })
            .collect::<Result<_>>()?;
        Ok(EmbedResponse { dim: table.dim, vectors })
    }
}
