#![allow(dead_code)]

use std::sync::Arc;

use harmony::dictionary::DataDictionary;
use harmony::embedding::{EmbeddingClient, HashEmbedder};
use harmony::features::{prepare_dictionary, FeatureMatrix, GoldPairs};
use harmony::synthetic::{generate, SyntheticConfig};
use harmony::text::TermFrequencyExtractor;

pub struct Fixture {
    pub sources: DataDictionary,
    pub targets: DataDictionary,
    pub gold: GoldPairs,
    pub matrix: FeatureMatrix,
}

pub fn hash_client() -> EmbeddingClient {
    EmbeddingClient::new(Arc::new(HashEmbedder::new(256, 42)))
}

/// A small generated corpus scored with hash embeddings.
pub fn fixture(n_sources: usize, n_targets: usize, noise: f64) -> Fixture {
    let corpus = generate(&SyntheticConfig { n_sources, n_targets, noise, ..Default::default() }).unwrap();
    let client = hash_client();
    let s = prepare_dictionary(&corpus.sources, &TermFrequencyExtractor, &client).unwrap();
    let t = prepare_dictionary(&corpus.targets, &TermFrequencyExtractor, &client).unwrap();
    let matrix = FeatureMatrix::build(&s, &t).unwrap();
    Fixture { sources: corpus.sources, targets: corpus.targets, gold: corpus.gold, matrix }
}
