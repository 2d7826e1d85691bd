//! Repeated trials on a generated corpus, comparing the forest with the
//! label-only baselines.
//!
//! cargo run --release --example synthetic_trials -- [n_trials] [noise]

use std::sync::Arc;
use std::time::Instant;

use harmony::embedding::{EmbeddingClient, HashEmbedder};
use harmony::features::FeatureSchema;
use harmony::forest::ForestParams;
use harmony::harness::{best_baseline, compare_methods, run_trials, Experiment, ExperimentConfig, ENSEMBLE};
use harmony::synthetic::{generate, SyntheticConfig};
use harmony::text::TermFrequencyExtractor;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_trials: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10);
    let noise: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.5);

    let corpus = generate(&SyntheticConfig { noise, ..Default::default() })?;
    let client = EmbeddingClient::new(Arc::new(HashEmbedder::new(256, 42)));
    let started = Instant::now();
    let exp = Experiment::from_dictionaries(&corpus.sources, &corpus.targets, corpus.gold.clone(), &TermFrequencyExtractor, &client)?;
    println!("scored {} x {} pairs in {:.1?}", corpus.sources.len(), corpus.targets.len(), started.elapsed());

    let cfg = ExperimentConfig {
        n_trials,
        base_seed: 1,
        grid: vec![
            ForestParams { n_trees: 50, ..Default::default() },
            ForestParams { n_trees: 50, max_depth: Some(10), min_samples_split: 5, ..Default::default() },
        ],
        ..Default::default()
    };
    let started = Instant::now();
    let run = run_trials(&exp, &cfg, &FeatureSchema::full(), None)?;
    println!("{n_trials} trials in {:.1?}", started.elapsed());

    for r in &run.results {
        let base: Vec<String> = r.baselines.iter().map(|(k, v)| format!("{k} {:.3}", v.mrr)).collect();
        println!("trial {:2}: forest MRR {:.3} HR-5 {:.3} | {}", r.trial_id, r.ensemble.mrr, r.ensemble.hr_at(5), base.join(", "));
    }
    let best = best_baseline(&run.results)?;
    let cmp = compare_methods(&run.results, ENSEMBLE, best, &cfg.metrics)?;
    for (metric, c) in &cmp {
        println!("{metric:>6}: forest {:.3} vs {best} {:.3}  diff {:+.3} [{:+.3}, {:+.3}] p={:.2e}", c.mean_a, c.mean_b, c.mean_diff, c.ci95.0, c.ci95.1, c.p_value);
    }
    Ok(())
}
