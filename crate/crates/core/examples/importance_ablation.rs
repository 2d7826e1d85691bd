//! Permutation importance and feature-group ablation on a fixture where only
//! one feature separates the true match.
//!
//! cargo run --release --example importance_ablation

use harmony::features::{FeatureMatrix, GoldPairs, N_FEATURES};
use harmony::forest::ForestParams;
use harmony::harness::{ablation, ablation_csv, importance_csv, importance_over_trials, Experiment, ExperimentConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let (n_sources, n_targets) = (60, 80);
    let names = |p: &str, n: usize| (0..n).map(|i| format!("{p}{i:03}")).collect::<Vec<_>>();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let matrix = FeatureMatrix::from_fn(names("s", n_sources), names("t", n_targets), |s, t| {
        let mut f = [0.0; N_FEATURES];
        f.iter_mut().for_each(|v| *v = rng.random());
        f[0] = if s == t { 0.8 + 0.2 * rng.random::<f64>() } else { 0.7 * rng.random::<f64>() };
        f
    });
    let gold = GoldPairs::new((0..n_sources).map(|i| (format!("s{i:03}"), format!("t{i:03}"))));
    let exp = Experiment::new(matrix, gold)?;

    let cfg = ExperimentConfig {
        n_trials: 5,
        negatives_per_source: 20,
        grid: vec![ForestParams { n_trees: 40, ..Default::default() }],
        metrics: vec!["HR-5".into(), "MRR".into()],
        ..Default::default()
    };
    let rows = importance_over_trials(&exp, &cfg, None)?;
    print!("{}", importance_csv(&rows[..5.min(rows.len())], &cfg.importance_metrics)?);

    let (_, groups) = ablation(&exp, &cfg, None)?;
    print!("\n{}", ablation_csv(&groups, &cfg.metrics)?);
    Ok(())
}
