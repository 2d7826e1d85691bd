//! Run the review API in-process, record curator verdicts over HTTP,
//! retrain from them, and watch the serving model version change.
//!
//! cargo run --release --example review_service

use std::sync::Arc;

use harmony::embedding::{EmbeddingClient, HashEmbedder};
use harmony::features::{prepare_dictionary, FeatureMatrix};
use harmony::forest::ForestParams;
use harmony::service::{router, LabelStore, ServiceSettings, ServiceState};
use harmony::synthetic::{generate, SyntheticConfig};
use harmony::text::TermFrequencyExtractor;
use serde_json::{json, Value};

fn get(url: &str) -> anyhow::Result<Value> {
    Ok(ureq::get(url).call()?.body_mut().read_json()?)
}

fn post(url: &str, body: Value) -> anyhow::Result<Value> {
    Ok(ureq::post(url).send_json(body)?.body_mut().read_json()?)
}

fn main() -> anyhow::Result<()> {
    let corpus = generate(&SyntheticConfig { n_sources: 20, n_targets: 80, ..Default::default() })?;
    let client = EmbeddingClient::new(Arc::new(HashEmbedder::new(256, 42)));
    let s = prepare_dictionary(&corpus.sources, &TermFrequencyExtractor, &client)?;
    let t = prepare_dictionary(&corpus.targets, &TermFrequencyExtractor, &client)?;
    let matrix = FeatureMatrix::build(&s, &t)?;
    let settings = ServiceSettings { negatives_per_source: 40, params: ForestParams { n_trees: 50, ..Default::default() }, ..Default::default() };
    let state = Arc::new(ServiceState::new(corpus.sources.clone(), corpus.targets, matrix, LabelStore::in_memory(), None, settings)?);

    let rt = tokio::runtime::Runtime::new()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let base = format!("http://{}", listener.local_addr()?);
    rt.spawn(async move { axum::serve(listener, router(state)).await });

    let probe = &corpus.sources.records()[0].name;
    let before = get(&format!("{base}/api/sources/{probe}/candidates?top=3"))?;
    println!("serving {}: top for {probe} = {}", before["model_version"], before["candidates"][0]["target"]);

    // a curator accepts the known match of the first 12 sources
    for src in corpus.sources.records().iter().take(12) {
        let target = corpus.gold.targets_of(&src.name).and_then(|g| g.iter().next()).expect("every source has a match");
        post(&format!("{base}/api/labels"), json!({ "source": src.name, "target": target, "verdict": "accept", "curator": "ana" }))?;
    }
    println!("{} labels stored", get(&format!("{base}/api/labels"))?.as_array().map_or(0, Vec::len));

    let outcome = post(&format!("{base}/api/retrain"), json!({}))?;
    println!("retrained on {} pairs -> {}", outcome["n_pairs"], outcome["model_version"]);
    let after = get(&format!("{base}/api/sources/{probe}/candidates?top=3"))?;
    println!("serving {}: top for {probe} = {}", after["model_version"], after["candidates"][0]["target"]);
    Ok(())
}
