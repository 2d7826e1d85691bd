use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use super::ContentHash;
use crate::error::{Error, Result};

const INDEX_FILE: &str = "index.tsv";

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Two-level vector cache: an in-memory map over a directory of binary
/// vector files, one subdirectory per model.
///
/// Each vector lives in `<model>/<hex hash>.vec` (u32 dim, then f32 values,
/// little-endian) and is written via rename, so readers never observe a
/// partial file. `<model>/index.tsv` lists `hash<TAB>dim` per stored vector.
pub struct EmbeddingCache {
    root: PathBuf,
    memory: RwLock<HashMap<(String, ContentHash), Arc<[f32]>>>,
}

impl EmbeddingCache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(EmbeddingCache { root, memory: RwLock::new(HashMap::new()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn model_dir(&self, model_id: &str) -> PathBuf {
        let safe: String = model_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
            .collect();
        self.root.join(safe)
    }

    fn vector_path(&self, model_id: &str, hash: &ContentHash) -> PathBuf {
        self.model_dir(model_id).join(format!("{}.vec", hex::encode(hash)))
    }

    pub fn get(&self, model_id: &str, hash: &ContentHash) -> Option<Arc<[f32]>> {
        let key = (model_id.to_string(), *hash);
        if let Some(v) = self.memory.read().unwrap().get(&key) {
            return Some(v.clone());
        }
        let bytes = fs::read(self.vector_path(model_id, hash)).ok()?;
        let values: Arc<[f32]> = decode(&bytes)?.into();
        self.memory.write().unwrap().insert(key, values.clone());
        Some(values)
    }

    pub fn put(&self, model_id: &str, hash: &ContentHash, values: &[f32]) -> Result<()> {
        let dir = self.model_dir(model_id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = self.vector_path(model_id, hash);
        let fresh = !path.exists();
        let tmp = dir.join(format!(
            ".{}.{}.{}.tmp",
            hex::encode(hash),
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        fs::write(&tmp, encode(values)).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        if fresh {
            let index = dir.join(INDEX_FILE);
            let mut f = OpenOptions::new().create(true).append(true).open(&index).map_err(|e| Error::io(&index, e))?;
            writeln!(f, "{}\t{}", hex::encode(hash), values.len()).map_err(|e| Error::io(&index, e))?;
        }
        self.memory.write().unwrap().insert((model_id.to_string(), *hash), values.into());
        Ok(())
    }

    /// Drops the in-memory layer; later reads go back to disk.
    pub fn evict_memory(&self) {
        self.memory.write().unwrap().clear();
    }

    /// Hashes listed in a model's index file.
    pub fn indexed(&self, model_id: &str) -> Vec<(ContentHash, usize)> {
        let Ok(raw) = fs::read_to_string(self.model_dir(model_id).join(INDEX_FILE)) else {
            return Vec::new();
        };
        raw.lines()
            .filter_map(|line| {
                let (h, d) = line.split_once('\t')?;
                let hash: ContentHash = hex::decode(h).ok()?.try_into().ok()?;
                Some((hash, d.parse().ok()?))
            })
            .collect()
    }
}

fn encode(values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + values.len() * 4);
    out.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode(bytes: &[u8]) -> Option<Vec<f32>> {
    let dim = u32::from_le_bytes(bytes.get(..4)?.try_into().ok()?) as usize;
    let body = bytes.get(4..)?;
    if body.len() != dim * 4 {
        return None;
    }
    Some(body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
}
