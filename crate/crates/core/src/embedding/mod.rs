//! Text embeddings: provider contract, cosine similarity and caching.
//!
//! Providers must return unit-normalized vectors. The client checks this
//! instead of fixing it up, so a misbehaving provider fails loudly.

mod cache;
mod hashing;
mod remote;
mod vector_file;

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cache::EmbeddingCache;
pub use hashing::{hash_embed, HashEmbedder};
pub use remote::{endpoint_from_env, HttpEmbeddingProvider, HttpKeywordProvider, ENDPOINT_ENV};
pub use vector_file::{read_vector_file, write_vector_file, VectorFileProvider, VectorTable};

use crate::error::{Error, Result};

/// Identifiers of the three sentence-embedding models, in feature order.
pub const MODEL_IDS: [&str; 3] = ["e5-large-v2", "mpnet-base-all", "minilm-l12-all"];

pub const CACHE_DIR_ENV: &str = "HARMONY_CACHE_DIR";

const NORM_TOLERANCE: f64 = 1e-6;

pub type ContentHash = [u8; 32];

pub fn content_hash(text: &str) -> ContentHash {
    Sha256::digest(text.as_bytes()).into()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub model_id: String,
    pub values: Arc<[f32]>,
}

impl EmbeddingVector {
    pub fn new(model_id: impl Into<String>, values: impl Into<Arc<[f32]>>) -> Self {
        EmbeddingVector { model_id: model_id.into(), values: values.into() }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
    }
}

/// Cosine similarity of two vectors of equal dimension.
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    cosine_slices(&u.values, &v.values)
}

pub fn cosine_slices(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimMismatch { expected: u.len(), actual: v.len() });
    }
    let (mut dot, mut nu, mut nv) = (0.0f64, 0.0f64, 0.0f64);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (f64::from(a), f64::from(b));
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub model_id: String,
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub dim: usize,
    pub vectors: Vec<Vec<f32>>,
}

/// Something that turns texts into vectors for a named model.
pub trait EmbeddingProvider: Send + Sync {
    /// Human-readable location, used in error messages.
    fn endpoint(&self) -> String;

    fn embed(&self, request: &EmbedRequest) -> Result<EmbedResponse>;
}

/// Cache-first batching front end over an [`EmbeddingProvider`].
pub struct EmbeddingClient {
    provider: Arc<dyn EmbeddingProvider>,
    fallback: Option<Arc<dyn EmbeddingProvider>>,
    cache: Option<Arc<EmbeddingCache>>,
    batch_size: usize,
}

impl EmbeddingClient {
    pub fn new(provider: Arc<dyn EmbeddingProvider>) -> Self {
        EmbeddingClient { provider, fallback: None, cache: None, batch_size: 64 }
    }

    pub fn with_cache(mut self, cache: Arc<EmbeddingCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_fallback(mut self, fallback: Arc<dyn EmbeddingProvider>) -> Self {
        self.fallback = Some(fallback);
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn endpoint(&self) -> String {
        self.provider.endpoint()
    }

    /// Embeds `texts` in order. Cached vectors are served without calling
    /// the provider; misses are fetched in batches and persisted before
    /// returning.
    pub fn embed_batch(&self, texts: &[String], model_id: &str) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Err(Error::Invalid("no texts to embed".into()));
        }
        let hashes: Vec<ContentHash> = texts.iter().map(|t| content_hash(t)).collect();
        let mut found: HashMap<ContentHash, Arc<[f32]>> = HashMap::new();
        let mut missing: Vec<usize> = Vec::new();
        let mut pending: HashSet<ContentHash> = HashSet::new();
        for (i, h) in hashes.iter().enumerate() {
            if found.contains_key(h) || pending.contains(h) {
                continue;
            }
            match self.cache.as_ref().and_then(|c| c.get(model_id, h)) {
                Some(v) => {
                    found.insert(*h, v);
                }
                None => {
                    pending.insert(*h);
                    missing.push(i);
                }
            }
        }

        let mut dim = found.values().next().map(|v| v.len());
        for chunk in missing.chunks(self.batch_size) {
            let request = EmbedRequest {
                model_id: model_id.to_string(),
                texts: chunk.iter().map(|&i| texts[i].clone()).collect(),
            };
            let response = self.fetch(&request)?;
            if response.vectors.len() != chunk.len() {
                return Err(Error::Invalid(format!(
                    "provider returned {} vectors for {} texts",
                    response.vectors.len(),
                    chunk.len()
                )));
            }
            for (&i, values) in chunk.iter().zip(response.vectors) {
                let expected = *dim.get_or_insert(response.dim);
                if values.len() != expected || response.dim != expected {
                    return Err(Error::DimMismatch { expected, actual: values.len() });
                }
                let v = EmbeddingVector::new(model_id, values);
                let norm = v.norm();
                if (norm - 1.0).abs() > NORM_TOLERANCE {
                    return Err(Error::NotNormalized { model_id: model_id.to_string(), norm });
                }
                if let Some(cache) = &self.cache {
                    cache.put(model_id, &hashes[i], &v.values)?;
                }
                found.insert(hashes[i], v.values);
            }
        }

        hashes
            .iter()
            .map(|h| {
                let values = found[h].clone();
                match dim {
                    Some(d) if d != values.len() => Err(Error::DimMismatch { expected: d, actual: values.len() }),
                    _ => Ok(EmbeddingVector { model_id: model_id.to_string(), values }),
                }
            })
            .collect()
    }

    fn fetch(&self, request: &EmbedRequest) -> Result<EmbedResponse> {
        match self.provider.embed(request) {
            Err(Error::ProviderUnavailable { .. }) if self.fallback.is_some() => {
                self.fallback.as_ref().unwrap().embed(request)
            }
            other => other,
        }
    }
}
