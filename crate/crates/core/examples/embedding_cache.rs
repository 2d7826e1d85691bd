//! Cache-first embedding: the second request for the same texts never
//! reaches the provider, and a vector file can stand in for a live model.
//!
//! cargo run --example embedding_cache

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use harmony::embedding::{
    cosine, read_vector_file, write_vector_file, EmbedRequest, EmbedResponse, EmbeddingCache, EmbeddingClient, EmbeddingProvider,
    HashEmbedder, VectorFileProvider, VectorTable,
};

/// Counts texts sent to the wrapped provider.
struct Counting<P> {
    inner: P,
    texts: AtomicUsize,
}

impl<P: EmbeddingProvider> EmbeddingProvider for Counting<P> {
    fn endpoint(&self) -> String {
        self.inner.endpoint()
    }

    fn embed(&self, request: &EmbedRequest) -> harmony::Result<EmbedResponse> {
        self.texts.fetch_add(request.texts.len(), Ordering::SeqCst);
        self.inner.embed(request)
    }
}

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let provider = Arc::new(Counting { inner: HashEmbedder::new(64, 7), texts: AtomicUsize::new(0) });
    let client = EmbeddingClient::new(provider.clone()).with_cache(Arc::new(EmbeddingCache::open(dir.path())?));

    let texts: Vec<String> = ["body mass index", "BMI kg/m2", "sex of participant"].map(String::from).to_vec();
    let first = client.embed_batch(&texts, "e5-large-v2")?;
    client.embed_batch(&texts, "e5-large-v2")?;
    println!("provider saw {} texts for two identical requests", provider.texts.load(Ordering::SeqCst));
    println!("cos(label 0, label 1) = {:.4}", cosine(&first[0], &first[1])?);
    println!("cos(label 0, label 2) = {:.4}", cosine(&first[0], &first[2])?);

    // precomputed vectors in the binary vector-file format
    let mut table = VectorTable::new("e5-large-v2", 64);
    for (t, v) in texts.iter().zip(&first) {
        table.insert_text(t, v.values.to_vec())?;
    }
    let mut bytes = Vec::new();
    write_vector_file(&mut bytes, &table)?;
    let offline = EmbeddingClient::new(Arc::new(VectorFileProvider::new([read_vector_file(bytes.as_slice())?])));
    let again = offline.embed_batch(&texts[..1], "e5-large-v2")?;
    println!("vector file round trip identical: {}", again[0].values == first[0].values);
    Ok(())
}
