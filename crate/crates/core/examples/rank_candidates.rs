//! Score every source/target pair of a generated corpus, rank targets with
//! the untrained similarity average, and evaluate hit ratios and MRR.
//!
//! cargo run --release --example rank_candidates

use std::sync::Arc;

use harmony::embedding::{EmbeddingClient, HashEmbedder};
use harmony::features::{prepare_dictionary, FeatureMatrix};
use harmony::rank::{MetricReport, RankedList, HR_CUTOFFS};
use harmony::service::{heuristic_score, rank_candidates, ModelVersion};
use harmony::synthetic::{generate, SyntheticConfig};
use harmony::text::TermFrequencyExtractor;

fn main() -> anyhow::Result<()> {
    let corpus = generate(&SyntheticConfig { n_sources: 20, n_targets: 120, ..Default::default() })?;
    let client = EmbeddingClient::new(Arc::new(HashEmbedder::new(256, 42)));
    let sources = prepare_dictionary(&corpus.sources, &TermFrequencyExtractor, &client)?;
    let targets = prepare_dictionary(&corpus.targets, &TermFrequencyExtractor, &client)?;
    let matrix = FeatureMatrix::build(&sources, &targets)?;

    let version = ModelVersion::heuristic();
    let first = &corpus.sources.records()[0];
    println!("{} \"{}\"", first.name, first.label);
    for c in rank_candidates(&matrix, &corpus.targets, &version, &first.name, 5, false)?.candidates {
        let mark = if corpus.gold.is_match(&first.name, &c.target) { "*" } else { " " };
        println!("  {mark} {:>4} {:<8} {:.3} {}", c.rank, c.target, c.score, c.label);
    }

    let lists: Vec<RankedList> = matrix
        .sources()
        .iter()
        .enumerate()
        .map(|(s, name)| {
            let scored = matrix.targets().iter().enumerate().map(|(t, tn)| (tn.clone(), heuristic_score(matrix.features(s, t)))).collect();
            RankedList::new(name.clone(), scored, corpus.gold.targets_of(name).cloned().unwrap_or_default())
        })
        .collect();
    let report = MetricReport::from_lists(&lists);
    for n in HR_CUTOFFS {
        print!("HR-{n} {:.3}  ", report.hr_at(n));
    }
    println!("MRR {:.3}", report.mrr);
    Ok(())
}
