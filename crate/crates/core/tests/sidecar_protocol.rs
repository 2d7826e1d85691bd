//! The embedding sidecar protocol, exercised against an in-process mock.

use std::net::SocketAddr;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use harmony::embedding::{hash_embed, EmbeddingCache, EmbeddingClient, HttpEmbeddingProvider, HttpKeywordProvider};
use harmony::synthetic::{generate, SyntheticConfig};
use harmony::text::{KeywordProvider, TermFrequencyExtractor};
use harmony::Error;

#[derive(Default)]
struct Calls {
    embed: AtomicUsize,
    texts: AtomicUsize,
    keywords: AtomicUsize,
}

async fn embed(State(c): State<Arc<Calls>>, Json(req): Json<Value>) -> Json<Value> {
    c.embed.fetch_add(1, Ordering::SeqCst);
    let texts = req["texts"].as_array().unwrap();
    c.texts.fetch_add(texts.len(), Ordering::SeqCst);
    let model = req["model_id"].as_str().unwrap();
    let seed = model.len() as u64;
    let vectors: Vec<Vec<f32>> = texts.iter().map(|t| hash_embed(t.as_str().unwrap(), 32, seed).values.to_vec()).collect();
    Json(json!({ "dim": 32, "vectors": vectors }))
}

async fn keywords(State(c): State<Arc<Calls>>, Json(req): Json<Value>) -> Json<Value> {
    c.keywords.fetch_add(1, Ordering::SeqCst);
    let text = req["text"].as_str().unwrap();
    let max = req["max_words"].as_u64().unwrap() as usize;
    Json(json!({ "keywords": TermFrequencyExtractor.extract(text, max).unwrap() }))
}

/// Starts the mock on an ephemeral port; it lives until the process exits.
fn mock_sidecar() -> (String, Arc<Calls>) {
    let calls = Arc::new(Calls::default());
    let app = Router::new().route("/embed", post(embed)).route("/keywords", post(keywords)).with_state(calls.clone());
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr: SocketAddr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let l = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(l, app).await.unwrap();
        });
    });
    (format!("http://{addr}"), calls)
}

/// An address nothing listens on.
fn dead_endpoint() -> String {
    let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap();
    drop(l);
    format!("http://{addr}")
}

#[test]
fn embed_round_trip_and_cache_reuse() {
    let (url, calls) = mock_sidecar();
    let dir = tempfile::tempdir().unwrap();
    let client = EmbeddingClient::new(Arc::new(HttpEmbeddingProvider::new(&url)))
        .with_cache(Arc::new(EmbeddingCache::open(dir.path()).unwrap()))
        .with_batch_size(2);
    let texts: Vec<String> = ["body mass index", "sex", "age at visit"].map(String::from).to_vec();
    let first = client.embed_batch(&texts, "e5-large-v2").unwrap();
    assert_eq!(first.len(), 3);
    assert_eq!(calls.embed.load(Ordering::SeqCst), 2);
    for v in &first {
        assert_eq!(v.dim(), 32);
        assert!((v.norm() - 1.0).abs() < 1e-6);
    }
    assert_eq!(first[0].values.as_ref(), hash_embed("body mass index", 32, 11).values.as_ref());

    let again = client.embed_batch(&texts, "e5-large-v2").unwrap();
    assert_eq!(calls.embed.load(Ordering::SeqCst), 2);
    for (a, b) in first.iter().zip(&again) {
        assert_eq!(a.values.as_ref(), b.values.as_ref());
    }

    // a fresh client over the same directory is served from disk
    let cold = EmbeddingClient::new(Arc::new(HttpEmbeddingProvider::new(dead_endpoint())))
        .with_cache(Arc::new(EmbeddingCache::open(dir.path()).unwrap()));
    let disk = cold.embed_batch(&texts, "e5-large-v2").unwrap();
    assert_eq!(disk[2].values.as_ref(), first[2].values.as_ref());
}

#[test]
fn keywords_round_trip() {
    let (url, calls) = mock_sidecar();
    let kw = HttpKeywordProvider::new(&url);
    let rule = "if the participant reported smoking cigarettes daily smoking status is coded current smoker otherwise never";
    assert_eq!(kw.extract(rule, 15).unwrap(), TermFrequencyExtractor.extract(rule, 15).unwrap());
    assert_eq!(calls.keywords.load(Ordering::SeqCst), 1);
}

#[test]
fn unreachable_provider_names_endpoint() {
    let url = dead_endpoint();
    let client = EmbeddingClient::new(Arc::new(HttpEmbeddingProvider::new(&url)));
    match client.embed_batch(&["x".to_string()], "e5-large-v2") {
        Err(Error::ProviderUnavailable { endpoint, .. }) => assert_eq!(endpoint, url),
        other => panic!("expected ProviderUnavailable, got {other:?}"),
    }
    match HttpKeywordProvider::new(&url).extract("a b c", 15) {
        Err(Error::ProviderUnavailable { endpoint, .. }) => assert_eq!(endpoint, url),
        other => panic!("expected ProviderUnavailable, got {other:?}"),
    }
}

fn write_corpus(dir: &std::path::Path) {
    let corpus = generate(&SyntheticConfig { n_sources: 6, n_targets: 12, multi_gold_every: None, ..Default::default() }).unwrap();
    corpus.write_to(dir).unwrap();
}

fn harmony(args: &[&str], env: &[(&str, &str)]) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_harmony"));
    cmd.args(args).env_remove("HARMONY_EMBED_ENDPOINT").env_remove("HARMONY_CACHE_DIR");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

#[test]
fn cli_match_exits_2_when_provider_is_down() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path());
    let s = dir.path().join("sources.csv");
    let t = dir.path().join("targets.csv");
    let url = dead_endpoint();
    let out = harmony(&["match", "--sources", s.to_str().unwrap(), "--targets", t.to_str().unwrap(), "--top", "3"], &[("HARMONY_EMBED_ENDPOINT", &url)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&url), "stderr: {err}");
}

#[test]
fn cli_match_through_sidecar_then_from_warm_cache() {
    let (url, calls) = mock_sidecar();
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path());
    let cache = dir.path().join("cache");
    let s = dir.path().join("sources.csv");
    let t = dir.path().join("targets.csv");
    let args = |endpoint: &str| {
        vec![
            "match".to_string(),
            "--sources".into(),
            s.display().to_string(),
            "--targets".into(),
            t.display().to_string(),
            "--top".into(),
            "3".into(),
            "--keywords".into(),
            "tf".into(),
            "--endpoint".into(),
            endpoint.to_string(),
            "--cache-dir".into(),
            cache.display().to_string(),
        ]
    };
    let a = args(&url);
    let warm = harmony(&a.iter().map(String::as_str).collect::<Vec<_>>(), &[]);
    assert!(warm.status.success(), "{}", String::from_utf8_lossy(&warm.stderr));
    assert!(calls.texts.load(Ordering::SeqCst) > 0);
    let lines: Vec<&str> = std::str::from_utf8(&warm.stdout).unwrap().lines().collect();
    assert_eq!(lines.len(), 1 + 6 * 3);

    let b = args(&dead_endpoint());
    let cached = harmony(&b.iter().map(String::as_str).collect::<Vec<_>>(), &[]);
    assert!(cached.status.success(), "{}", String::from_utf8_lossy(&cached.stderr));
    assert_eq!(cached.stdout, warm.stdout);
}
