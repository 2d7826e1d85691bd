//! Build training pairs, tune a small grid by source-grouped cross
//! validation, train the forest, and round-trip it through JSON.
//!
//! cargo run --release --example train_forest

use std::sync::Arc;

use harmony::embedding::{EmbeddingClient, HashEmbedder};
use harmony::features::{generate_test_pairs, generate_training_pairs, FeatureSchema};
use harmony::forest::{grid_search_cv, train_forest, Criterion, ForestModel, ForestParams};
use harmony::harness::{split_sources, Experiment};
use harmony::rank::{lists_from_scores, MetricReport};
use harmony::rng;
use harmony::synthetic::{generate, SyntheticConfig};
use harmony::text::TermFrequencyExtractor;

fn main() -> anyhow::Result<()> {
    let corpus = generate(&SyntheticConfig::default())?;
    let client = EmbeddingClient::new(Arc::new(HashEmbedder::new(256, 42)));
    let exp = Experiment::from_dictionaries(&corpus.sources, &corpus.targets, corpus.gold, &TermFrequencyExtractor, &client)?;

    let (train_sources, test_sources) = split_sources(&exp.eligible_sources(), 1);
    let train = generate_training_pairs(&exp.gold, &train_sources, &exp.matrix, 200, &mut rng::stream(1, &[0]))?;
    println!("{} training pairs, {} positive", train.len(), train.iter().filter(|p| p.gold).count());

    let grid = vec![
        ForestParams { n_trees: 50, ..Default::default() },
        ForestParams { n_trees: 50, criterion: Criterion::Entropy, max_depth: Some(8), ..Default::default() },
    ];
    let schema = FeatureSchema::full();
    let cv = grid_search_cv(&train, &schema, &grid, 5, 1)?;
    println!("cv MRR per config {:?}; best #{}", cv.mean_mrr, cv.best_index);

    let model = train_forest(&train, &schema, &cv.best, 1)?;
    let restored = ForestModel::from_json(&model.to_json()?)?;
    println!("model hash {} (restored {})", &model.content_hash()?[..16], &restored.content_hash()?[..16]);

    let test = generate_test_pairs(&exp.gold, &test_sources, &train_sources, &exp.matrix)?;
    let report = MetricReport::from_lists(&lists_from_scores(&test, &restored.predict_many(&test)?)?);
    println!("held-out {} sources: HR-5 {:.3}, MRR {:.3}", test_sources.len(), report.hr_at(5), report.mrr);
    println!("features used by splits: {}", model.used_features().len());
    Ok(())
}
