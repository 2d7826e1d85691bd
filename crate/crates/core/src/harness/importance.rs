use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::PairInstance;
use crate::forest::ForestModel;
use crate::rank::{assign_ranks, lists_from_scores, MetricReport};

/// Decline in each metric after shuffling one feature, for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub decline: BTreeMap<String, f64>,
}

/// Importance aggregated over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub feature: String,
    pub mean_importance: BTreeMap<String, f64>,
    /// Mean within-trial rank, 1 = most important; ties share the average.
    pub mean_rank: BTreeMap<String, f64>,
}

fn metric_values(report: &MetricReport, metrics: &[String]) -> Result<Vec<f64>> {
    metrics.iter().map(|m| report.metric(m).ok_or_else(|| Error::Invalid(format!("unknown metric `{m}`")))).collect()
}

fn evaluate(pairs: &[PairInstance], scores: &[f64], metrics: &[String]) -> Result<Vec<f64>> {
    metric_values(&MetricReport::from_lists(&lists_from_scores(pairs, scores)?), metrics)
}

/// Shuffles each schema column across all test pairs with one permutation
/// per repeat and records `baseline - permuted` per metric, averaged over
/// repeats. Permutations are drawn up front, in schema order.
pub fn permutation_importance<R: Rng + ?Sized>(
    model: &ForestModel,
    test_pairs: &[PairInstance],
    metrics: &[String],
    rng: &mut R,
    repeats: usize,
) -> Result<Vec<FeatureImportance>> {
    if repeats == 0 {
        return Err(Error::Invalid("repeats must be positive".into()));
    }
    let schema = &model.schema;
    let rows: Vec<Vec<f64>> = test_pairs
        .iter()
        .map(|p| match p.features.len() {
            n if n == schema.len() => Ok(p.features.clone()),
            crate::features::N_FEATURES => Ok(schema.project(&p.features)),
            n => Err(Error::SchemaMismatch { expected: schema.len(), actual: n }),
        })
        .collect::<Result<_>>()?;
    let base_scores: Vec<f64> = rows.par_iter().map(|r| model.predict_proba(r)).collect::<Result<_>>()?;
    let baseline = evaluate(test_pairs, &base_scores, metrics)?;

    let perms: Vec<Vec<Vec<usize>>> = (0..schema.len())
        .map(|_| {
            (0..repeats)
                .map(|_| {
                    let mut p: Vec<usize> = (0..rows.len()).collect();
                    p.shuffle(rng);
                    p
                })
                .collect()
        })
        .collect();

    schema
        .names()
        .par_iter()
        .enumerate()
        .map(|(j, name)| {
            let mut decline = vec![0.0; metrics.len()];
            for perm in &perms[j] {
                let scores: Vec<f64> = rows
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let mut v = r.clone();
                        v[j] = rows[perm[i]][j];
                        model.predict_proba(&v)
                    })
                    .collect::<Result<_>>()?;
                let permuted = evaluate(test_pairs, &scores, metrics)?;
                for (d, (b, p)) in decline.iter_mut().zip(baseline.iter().zip(&permuted)) {
                    *d += b - p;
                }
            }
            Ok(FeatureImportance {
                feature: name.clone(),
                decline: metrics.iter().cloned().zip(decline.into_iter().map(|d| d / repeats as f64)).collect(),
            })
        })
        .collect()
}

/// Mean importance and mean within-trial rank per feature, in the feature
/// order of the first trial.
pub fn summarize_importance(per_trial: &[Vec<FeatureImportance>], metrics: &[String]) -> Result<Vec<ImportanceRow>> {
    let first = per_trial.first().ok_or(Error::EmptyInput)?;
    let n_trials = per_trial.len() as f64;
    let mut rows: Vec<ImportanceRow> = first
        .iter()
        .map(|f| ImportanceRow { feature: f.feature.clone(), mean_importance: BTreeMap::new(), mean_rank: BTreeMap::new() })
        .collect();
    for m in metrics {
        let mut imp_sum = vec![0.0; rows.len()];
        let mut rank_sum = vec![0.0; rows.len()];
        for trial in per_trial {
            if trial.len() != rows.len() || trial.iter().zip(&rows).any(|(f, r)| f.feature != r.feature) {
                return Err(Error::Invalid("trials disagree on the feature list".into()));
            }
            let values: Vec<f64> = trial.iter().map(|f| f.decline.get(m).copied().unwrap_or(0.0)).collect();
            for (i, (v, r)) in values.iter().zip(assign_ranks(&values)).enumerate() {
                imp_sum[i] += v;
                rank_sum[i] += r;
            }
        }
        for (i, row) in rows.iter_mut().enumerate() {
            row.mean_importance.insert(m.clone(), imp_sum[i] / n_trials);
            row.mean_rank.insert(m.clone(), rank_sum[i] / n_trials);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureSchema;
    use crate::forest::{train_forest, ForestParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // 3 features: 0 carries the signal, 1 is noise, 2 is constant
    fn fixture(n_sources: usize, n_targets: usize, seed: u64) -> Vec<PairInstance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for s in 0..n_sources {
            for t in 0..n_targets {
                let gold = t == s % n_targets;
                let signal = if gold { 0.9 } else { 0.8 * rng.random::<f64>() };
                out.push(PairInstance {
                    source_name: format!("s{s}"),
                    target_name: format!("t{t}"),
                    features: vec![signal, rng.random(), 0.5],
                    gold,
                });
            }
        }
        out
    }

    fn metrics() -> Vec<String> {
        vec!["HR-5".into(), "HR-10".into(), "MRR".into()]
    }

    #[test]
    fn constant_and_unused_features_score_zero() {
        let schema = FeatureSchema::select(&[0, 1, 2]).unwrap();
        let train = fixture(30, 25, 1);
        // depth 1 with all features: only the signal column is ever split on
        let params = ForestParams { n_trees: 5, max_depth: Some(1), max_features: crate::forest::MaxFeatures::All, ..Default::default() };
        let model = train_forest(&train, &schema, &params, 0).unwrap();
        assert_eq!(model.used_features().into_iter().collect::<Vec<_>>(), vec![0]);
        let test = fixture(10, 25, 2);
        let imp = permutation_importance(&model, &test, &metrics(), &mut ChaCha8Rng::seed_from_u64(0), 2).unwrap();
        assert_eq!(imp.len(), 3);
        for m in metrics() {
            assert_eq!(imp[1].decline[&m], 0.0);
            assert_eq!(imp[2].decline[&m], 0.0);
        }
        assert!(imp[0].decline["MRR"] > 0.5);
    }

    #[test]
    fn summary_ranks() {
        let fi = |f: &str, v: f64| FeatureImportance { feature: f.into(), decline: [("MRR".to_string(), v)].into() };
        let trials = vec![vec![fi("a", 0.5), fi("b", 0.0), fi("c", 0.0)], vec![fi("a", 0.3), fi("b", 0.1), fi("c", 0.0)]];
        let rows = summarize_importance(&trials, &["MRR".into()]).unwrap();
        assert_eq!(rows[0].mean_rank["MRR"], 1.0);
        assert_eq!(rows[1].mean_rank["MRR"], (2.5 + 2.0) / 2.0);
        assert_eq!(rows[2].mean_rank["MRR"], (2.5 + 3.0) / 2.0);
        assert!((rows[0].mean_importance["MRR"] - 0.4).abs() < 1e-12);
    }
}
