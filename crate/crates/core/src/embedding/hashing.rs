use super::{EmbedRequest, EmbedResponse, EmbeddingProvider, EmbeddingVector};
use crate::error::Result;

const SLOTS_PER_TOKEN: u64 = 4;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic bag-of-words embedding for offline runs and tests.
///
/// Each lowercased alphanumeric token adds ±1 to a few hashed buckets; the
/// sum is unit-normalized. Texts sharing tokens therefore point in similar
/// directions, and unrelated texts are close to orthogonal.
///
/// # Panics
///
/// Panics if `dim < 8`.
pub fn hash_embed(text: &str, dim: usize, seed: u64) -> EmbeddingVector {
    assert!(dim >= 8, "hash_embed needs dim >= 8, got {dim}");
    let mut acc = vec![0f64; dim];
    let lower = text.to_lowercase();
    let mut tokens: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).collect();
    if tokens.is_empty() {
        tokens.push("\u{0}empty");
    }
    for tok in tokens {
        let base = fnv1a(tok.as_bytes()) ^ mix(seed);
        for k in 0..SLOTS_PER_TOKEN {
            let h = mix(base.wrapping_add(k.wrapping_mul(0x632b_e59b_d9b4_e019)));
            let bucket = (h % dim as u64) as usize;
            let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
            acc[bucket] += sign;
        }
    }
    let mut norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        // every contribution cancelled; fall back to a fixed axis
        acc[(mix(seed) % dim as u64) as usize] = 1.0;
        norm = 1.0;
    }
    let values: Vec<f32> = acc.iter().map(|x| (x / norm) as f32).collect();
    EmbeddingVector::new(format!("hash-{dim}-{seed}"), values)
}

/// [`EmbeddingProvider`] backed by [`hash_embed`]; each model id gets its
/// own seed derived from the base seed.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 8, "hash embedder needs dim >= 8");
        HashEmbedder { dim, seed }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed_for(&self, model_id: &str) -> u64 {
        mix(self.seed ^ fnv1a(model_id.as_bytes()))
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn endpoint(&self) -> String {
        format!("hash-embedder(dim={}, seed={})", self.dim, self.seed)
    }

    fn embed(&self, request: &EmbedRequest) -> Result<EmbedResponse> {
        let seed = self.seed_for(&request.model_id);
        let vectors = request.texts.iter().map(|t| hash_embed(t, self.dim, seed).values.to_vec()).collect();
        Ok(EmbedResponse { dim: self.dim, vectors })
    }
}
