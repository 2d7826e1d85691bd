use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train_forest, ForestParams};
use crate::error::{Error, Result};
use crate::features::{FeatureSchema, PairInstance};
use crate::rank::{lists_from_scores, mrr};
use crate::rng;

/// Result of a cross-validated grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub best: ForestParams,
    pub best_index: usize,
    /// Mean held-out MRR per grid entry, in grid order. Empty when the grid
    /// has a single entry, which is returned without cross-validation.
    pub mean_mrr: Vec<f64>,
}

/// Assigns each distinct source to one of `k` folds by seeded shuffle.
pub fn source_folds(data: &[PairInstance], k: usize, seed: u64) -> Result<HashMap<String, usize>> {
    let mut sources: Vec<&str> = data.iter().map(|p| p.source_name.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    if sources.len() < k || k < 2 {
        return Err(Error::TooFewSources { needed: k.max(2), have: sources.len() });
    }
    let mut r = rng::stream(seed, &[rng::FOLDS]);
    rand::seq::SliceRandom::shuffle(sources.as_mut_slice(), &mut r);
    Ok(sources.into_iter().enumerate().map(|(i, s)| (s.to_string(), i % k)).collect())
}

fn fold_mrr(data: &[PairInstance], folds: &HashMap<String, usize>, fold: usize, schema: &FeatureSchema, params: &ForestParams, seed: u64) -> Result<f64> {
    let (held, train): (Vec<PairInstance>, Vec<PairInstance>) = data.iter().cloned().partition(|p| folds[&p.source_name] == fold);
    let model = train_forest(&train, schema, params, rng::derive_seed(seed, &[rng::CV_FOREST, fold as u64]))?;
    let scores = model.predict_many(&held)?;
    Ok(mrr(&lists_from_scores(&held, &scores)?))
}

/// Picks the grid entry with the highest mean held-out MRR over `k` folds of
/// source variables. Ties go to the earlier grid entry.
pub fn grid_search_cv(data: &[PairInstance], schema: &FeatureSchema, grid: &[ForestParams], k: usize, seed: u64) -> Result<CvOutcome> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    for p in grid {
        p.validate()?;
    }
    let folds = source_folds(data, k, seed)?;
    if grid.len() == 1 {
        return Ok(CvOutcome { best: grid[0], best_index: 0, mean_mrr: Vec::new() });
    }
    let mean_mrr = grid
        .par_iter()
        .map(|params| {
            let per_fold = (0..k).map(|f| fold_mrr(data, &folds, f, schema, params, seed)).collect::<Result<Vec<_>>>()?;
            Ok(per_fold.iter().sum::<f64>() / k as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut best_index = 0;
    for (i, &m) in mean_mrr.iter().enumerate() {
        if m > mean_mrr[best_index] {
            best_index = i;
        }
    }
    Ok(CvOutcome { best: grid[best_index], best_index, mean_mrr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{Criterion, MaxFeatures};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Feature 0 separates gold pairs perfectly; feature 1 is noise.
    fn planted(n_sources: usize, per_source: usize, seed: u64) -> Vec<PairInstance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for s in 0..n_sources {
            for t in 0..per_source {
                let gold = t == 0;
                let signal = if gold { 0.6 + 0.4 * rng.random::<f64>() } else { 0.5 * rng.random::<f64>() };
                out.push(PairInstance {
                    source_name: format!("s{s}"),
                    target_name: format!("t{t}"),
                    features: vec![signal, rng.random()],
                    gold,
                });
            }
        }
        out
    }

    fn params(n_trees: usize, max_depth: Option<usize>) -> ForestParams {
        ForestParams {
            n_trees,
            max_depth,
            criterion: Criterion::Gini,
            min_samples_split: 2,
            max_features: MaxFeatures::All,
            subsample_fraction: 1.0,
        }
    }

    #[test]
    fn folds_partition_sources() {
        let data = planted(12, 5, 0);
        let folds = source_folds(&data, 5, 3).unwrap();
        assert_eq!(folds.len(), 12);
        let mut sizes = [0; 5];
        for f in folds.values() {
            sizes[*f] += 1;
        }
        assert!(sizes.iter().all(|&n| n == 2 || n == 3));
        assert_eq!(folds, source_folds(&data, 5, 3).unwrap());
    }

    #[test]
    fn errors() {
        let data = planted(4, 5, 0);
        let schema = FeatureSchema::select(&[0, 1]).unwrap();
        assert!(matches!(grid_search_cv(&data, &schema, &[], 5, 0), Err(Error::EmptyGrid)));
        assert!(matches!(
            grid_search_cv(&data, &schema, &[params(1, None)], 5, 0),
            Err(Error::TooFewSources { needed: 5, have: 4 })
        ));
    }

    #[test]
    fn single_entry_grid() {
        let data = planted(10, 5, 0);
        let schema = FeatureSchema::select(&[0, 1]).unwrap();
        let p = params(3, Some(4));
        assert_eq!(grid_search_cv(&data, &schema, &[p], 5, 0).unwrap().best, p);
    }

    #[test]
    fn prefers_config_that_can_use_the_signal() {
        // three candidates per source, one gold
        let data = planted(20, 3, 1);
        let schema = FeatureSchema::select(&[0, 1]).unwrap();
        let a = params(5, None);
        // each tree sees a single sample, so it never splits and every
        // candidate ties at rank 2
        let b = ForestParams { subsample_fraction: 0.01, min_samples_split: 10, ..a };
        let out = grid_search_cv(&data, &schema, &[b, a], 5, 2).unwrap();
        assert_eq!(out.mean_mrr, vec![0.5, 1.0]);
        assert_eq!(out.best, a);

        let out = grid_search_cv(&data, &schema, &[a, a], 5, 2).unwrap();
        assert_eq!(out.best_index, 0, "exact ties keep the first entry");
    }
}
