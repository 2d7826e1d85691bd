use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{best_baseline, compare_methods, metric_series, AblationRow, Experiment, ImportanceRow, TrialResult, ENSEMBLE};
use crate::error::{Error, Result};
use crate::features::BASELINES;
use crate::rank::RankedList;
use crate::stats::Comparison;

fn num(v: f64) -> String {
    format!("{v:.6}")
}

fn pval(v: f64) -> String {
    format!("{v:.3e}")
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

fn to_csv(header: Vec<String>, rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Invalid(e.to_string()))
}

/// One row per method (baselines, then the ensemble): mean and sd of each
/// metric across trials.
pub fn method_summary_csv(results: &[TrialResult], metrics: &[String]) -> Result<String> {
    let mut header = vec!["method".to_string()];
    for m in metrics {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_sd"));
    }
    let mut rows = Vec::new();
    for method in BASELINES.iter().map(|b| b.0).chain([ENSEMBLE]) {
        let mut row = vec![method.to_string()];
        for m in metrics {
            let (mean, sd) = mean_sd(&metric_series(results, method, m)?);
            row.push(num(mean));
            row.push(num(sd));
        }
        rows.push(row);
    }
    to_csv(header, rows)
}

fn comparison_cells(c: &Comparison) -> Vec<String> {
    vec![num(c.mean_diff), num(c.ci95.0), num(c.ci95.1), num(c.t_stat), pval(c.p_value)]
}

/// Ensemble against the best baseline, one row per metric.
pub fn comparison_csv(results: &[TrialResult], metrics: &[String]) -> Result<String> {
    let baseline = best_baseline(results)?;
    let cmp = compare_methods(results, ENSEMBLE, baseline, metrics)?;
    let header = ["metric", "ensemble_mean", "ensemble_sd", "baseline", "baseline_mean", "baseline_sd", "mean_diff", "ci95_lo", "ci95_hi", "t", "p"]
        .map(String::from)
        .to_vec();
    let rows = metrics
        .iter()
        .map(|m| {
            let c = &cmp[m];
            let mut row = vec![m.clone(), num(c.mean_a), num(c.sd_a), baseline.to_string(), num(c.mean_b), num(c.sd_b)];
            row.extend(comparison_cells(c));
            row
        })
        .collect();
    to_csv(header, rows)
}

/// Features sorted by mean importance on the last metric, descending.
pub fn importance_csv(rows: &[ImportanceRow], metrics: &[String]) -> Result<String> {
    let mut header = vec!["feature".to_string()];
    for m in metrics {
        header.push(format!("{m}_importance"));
        header.push(format!("{m}_rank"));
    }
    let key = metrics.last().ok_or(Error::EmptyInput)?;
    let mut order: Vec<&ImportanceRow> = rows.iter().collect();
    order.sort_by(|a, b| b.mean_importance[key].total_cmp(&a.mean_importance[key]));
    let out = order
        .into_iter()
        .map(|r| {
            let mut row = vec![r.feature.clone()];
            for m in metrics {
                row.push(num(r.mean_importance[m]));
                row.push(num(r.mean_rank[m]));
            }
            row
        })
        .collect();
    to_csv(header, out)
}

/// One row per ablated group: drop (full minus partial) with CI and p.
pub fn ablation_csv(rows: &[AblationRow], metrics: &[String]) -> Result<String> {
    let mut header = vec!["group".to_string(), "n_dropped".to_string()];
    for m in metrics {
        for col in ["delta", "ci95_lo", "ci95_hi", "t", "p"] {
            header.push(format!("{m}_{col}"));
        }
    }
    let out = rows
        .iter()
        .map(|r| {
            let mut row = vec![r.group.clone(), r.dropped.len().to_string()];
            for m in metrics {
                row.extend(comparison_cells(&r.full_minus_partial[m]));
            }
            row
        })
        .collect();
    to_csv(header, out)
}

/// How often each eligible source landed in a test set.
pub fn coverage_csv(exp: &Experiment, results: &[TrialResult]) -> Result<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let eligible = exp.eligible_sources();
    for s in &eligible {
        counts.insert(s, 0);
    }
    for r in results {
        for s in &r.test_sources {
            *counts.entry(s).or_default() += 1;
        }
    }
    let rows = eligible.iter().map(|s| vec![s.clone(), counts[s.as_str()].to_string()]).collect();
    to_csv(vec!["source".into(), "test_count".into()], rows)
}

/// Every entry of every list: source, rank, target, score, gold flag.
pub fn ranked_lists_csv(lists: &[RankedList]) -> Result<String> {
    let mut rows = Vec::new();
    for l in lists {
        for e in &l.entries {
            rows.push(vec![
                l.source_name.clone(),
                e.rank.to_string(),
                e.target_name.clone(),
                e.score.to_string(),
                u8::from(l.gold_targets.contains(&e.target_name)).to_string(),
            ]);
        }
    }
    to_csv(["source", "rank", "target", "score", "gold"].map(String::from).to_vec(), rows)
}

/// A gold pair ranked below the cutoff, with its strongest competitors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowRankRow {
    pub source: String,
    pub source_label: String,
    pub gold_target: String,
    pub gold_label: String,
    pub rank: f64,
    pub score: f64,
    pub competitors: Vec<(String, String, f64)>,
}

/// Rows for every gold pair whose assigned rank exceeds `cutoff`.
pub fn report_low_ranked(lists: &[RankedList], cutoff: usize, exp: Option<&Experiment>) -> Vec<LowRankRow> {
    let label = |f: &dyn Fn(&Experiment) -> Option<&str>| exp.and_then(f).unwrap_or_default().to_string();
    let mut out = Vec::new();
    for l in lists {
        let competitors: Vec<(String, String, f64)> = l
            .entries
            .iter()
            .filter(|e| !l.gold_targets.contains(&e.target_name))
            .take(3)
            .map(|e| (e.target_name.clone(), label(&|x| x.target_label(&e.target_name)), e.score))
            .collect();
        for e in l.entries.iter().filter(|e| l.gold_targets.contains(&e.target_name) && e.rank > cutoff as f64) {
            out.push(LowRankRow {
                source: l.source_name.clone(),
                source_label: label(&|x| x.source_label(&l.source_name)),
                gold_target: e.target_name.clone(),
                gold_label: label(&|x| x.target_label(&e.target_name)),
                rank: e.rank,
                score: e.score,
                competitors: competitors.clone(),
            });
        }
    }
    out
}

pub fn low_rank_csv(rows: &[(usize, LowRankRow)]) -> Result<String> {
    let mut header = ["trial", "source", "source_label", "gold_target", "gold_label", "rank", "score"].map(String::from).to_vec();
    for i in 1..=3 {
        header.extend([format!("competitor_{i}"), format!("competitor_{i}_label"), format!("competitor_{i}_score")]);
    }
    let out = rows
        .iter()
        .map(|(trial, r)| {
            let mut row = vec![
                trial.to_string(),
                r.source.clone(),
                r.source_label.clone(),
                r.gold_target.clone(),
                r.gold_label.clone(),
                r.rank.to_string(),
                num(r.score),
            ];
            for i in 0..3 {
                match r.competitors.get(i) {
                    Some((t, l, s)) => row.extend([t.clone(), l.clone(), num(*s)]),
                    None => row.extend([String::new(), String::new(), String::new()]),
                }
            }
            row
        })
        .collect();
    to_csv(header, out)
}

/// Writes `summary.csv`, `comparison.csv` and `coverage.csv` into `dir`.
pub fn write_trial_reports(dir: &Path, exp: &Experiment, results: &[TrialResult], metrics: &[String]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    write("summary.csv", method_summary_csv(results, metrics)?)?;
    write("comparison.csv", comparison_csv(results, metrics)?)?;
    write("coverage.csv", coverage_csv(exp, results)?)?;
    Ok(())
}
