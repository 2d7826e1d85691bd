//! Repeated train/test trials with single-method baselines, significance
//! tests, permutation importance, feature-group ablation and low-rank error
//! reports.
//!
//! A trial splits the gold-bearing source variables 4:1, tunes the forest by
//! cross-validation on the training sources, retrains on all training pairs
//! and ranks every target for each test source. Everything is a pure
//! function of the experiment inputs, the config and the trial seed.

mod importance;
mod report;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use importance::{permutation_importance, summarize_importance, FeatureImportance, ImportanceRow};
pub use report::{
    ablation_csv, comparison_csv, coverage_csv, importance_csv, low_rank_csv, method_summary_csv, report_low_ranked, ranked_lists_csv,
    write_trial_reports, LowRankRow,
};

use crate::dictionary::DataDictionary;
use crate::embedding::EmbeddingClient;
use crate::error::{Error, Result};
use crate::features::{
    generate_test_pairs, generate_training_pairs, prepare_dictionary, FeatureGroup, FeatureMatrix, FeatureSchema, GoldPairs, PairInstance,
    BASELINES, FEATURE_NAMES,
};
use crate::forest::{grid_search_cv, train_forest, ForestModel, ForestParams};
use crate::rank::{lists_from_scores, metric_names, MetricReport, RankedList, HR_CUTOFFS};
use crate::rng;
use crate::stats::{paired_t_test, Comparison};
use crate::text::KeywordProvider;

/// Fewest gold-bearing sources a trial accepts.
pub const MIN_TRIAL_SOURCES: usize = 10;

/// Name under which the forest appears next to the baselines.
pub const ENSEMBLE: &str = "RandomForest";

/// A named set of features, by full-schema name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    pub features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n_trials: usize,
    pub base_seed: u64,
    pub negatives_per_source: usize,
    pub grid: Vec<ForestParams>,
    pub cv_folds: usize,
    /// Metrics in reports, e.g. `HR-30` or `MRR`.
    pub metrics: Vec<String>,
    pub importance_metrics: Vec<String>,
    pub importance_repeats: usize,
    pub feature_groups: Vec<GroupSpec>,
    pub low_rank_cutoff: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_trials: 50,
            base_seed: 0,
            negatives_per_source: 200,
            grid: ForestParams::default_grid(),
            cv_folds: 5,
            metrics: metric_names(),
            importance_metrics: vec!["HR-5".into(), "HR-10".into(), "MRR".into()],
            importance_repeats: 1,
            feature_groups: FeatureGroup::ALL
                .iter()
                .map(|g| GroupSpec { name: g.name().to_string(), features: g.columns().map(|c| FEATURE_NAMES[c].to_string()).collect() })
                .collect(),
            low_rank_cutoff: 30,
        }
    }
}

fn valid_metric(name: &str) -> bool {
    if name == "MRR" {
        return true;
    }
    name.strip_prefix("HR-").and_then(|n| n.parse::<usize>().ok()).is_some_and(|n| HR_CUTOFFS.contains(&n))
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&raw)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::Invalid("n_trials must be positive".into()));
        }
        if self.negatives_per_source == 0 {
            return Err(Error::Invalid("negatives_per_source must be positive".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::EmptyGrid);
        }
        for p in &self.grid {
            p.validate()?;
        }
        if self.cv_folds < 2 {
            return Err(Error::Invalid("cv_folds must be at least 2".into()));
        }
        if self.importance_repeats == 0 {
            return Err(Error::Invalid("importance_repeats must be positive".into()));
        }
        if let Some(bad) = self.metrics.iter().chain(&self.importance_metrics).find(|m| !valid_metric(m)) {
            return Err(Error::Invalid(format!("unknown metric `{bad}`")));
        }
        self.resolve_groups()?;
        Ok(())
    }

    /// Resolves `feature_groups` to full-schema columns. The groups must
    /// partition all 18 features.
    pub fn resolve_groups(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let mut owner: BTreeMap<usize, &str> = BTreeMap::new();
        let mut out = Vec::new();
        for g in &self.feature_groups {
            let mut cols = Vec::new();
            for f in &g.features {
                let c = FEATURE_NAMES
                    .iter()
                    .position(|n| n == f)
                    .ok_or_else(|| Error::InvalidGroups(format!("unknown feature `{f}` in group `{}`", g.name)))?;
                if let Some(prev) = owner.insert(c, &g.name) {
                    return Err(Error::InvalidGroups(format!("feature `{f}` is in both `{prev}` and `{}`", g.name)));
                }
                cols.push(c);
            }
            out.push((g.name.clone(), cols));
        }
        if owner.len() != FEATURE_NAMES.len() {
            let missing: Vec<&str> = (0..FEATURE_NAMES.len()).filter(|c| !owner.contains_key(c)).map(|c| FEATURE_NAMES[c]).collect();
            return Err(Error::InvalidGroups(format!("features not in any group: {}", missing.join(", "))));
        }
        Ok(out)
    }

    // Settings that change trial results; report-only fields are excluded.
    fn trial_fingerprint(&self, exp: &Experiment, schema: &FeatureSchema) -> String {
        let mut h = Sha256::new();
        h.update(exp.fingerprint().as_bytes());
        h.update(schema.fingerprint().as_bytes());
        h.update(self.base_seed.to_le_bytes());
        h.update(self.negatives_per_source.to_le_bytes());
        h.update(self.cv_folds.to_le_bytes());
        h.update(serde_json::to_string(&self.grid).unwrap_or_default().as_bytes());
        hex::encode(&h.finalize()[..16])
    }
}

/// The scored corpus pair a set of trials runs on.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub matrix: FeatureMatrix,
    pub gold: GoldPairs,
    source_labels: HashMap<String, String>,
    target_labels: HashMap<String, String>,
    fingerprint: String,
}

impl Experiment {
    /// Every gold name must appear in the matrix.
    pub fn new(matrix: FeatureMatrix, gold: GoldPairs) -> Result<Self> {
        for (s, t) in gold.pairs() {
            if matrix.source_index(s).is_none() {
                return Err(Error::UnknownSource(s.to_string()));
            }
            if matrix.target_index(t).is_none() {
                return Err(Error::UnknownVariable(t.to_string()));
            }
        }
        let mut h = Sha256::new();
        h.update(matrix.fingerprint().as_bytes());
        for (s, t) in gold.pairs() {
            h.update(s.as_bytes());
            h.update(b"\t");
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        let fingerprint = hex::encode(&h.finalize()[..16]);
        Ok(Experiment { matrix, gold, source_labels: HashMap::new(), target_labels: HashMap::new(), fingerprint })
    }

    pub fn with_labels(mut self, sources: &DataDictionary, targets: &DataDictionary) -> Self {
        self.source_labels = sources.iter().map(|r| (r.name.clone(), r.label.clone())).collect();
        self.target_labels = targets.iter().map(|r| (r.name.clone(), r.label.clone())).collect();
        self
    }

    /// Prepares texts and embeddings for both dictionaries and scores every pair.
    pub fn from_dictionaries(
        sources: &DataDictionary,
        targets: &DataDictionary,
        gold: GoldPairs,
        keywords: &dyn KeywordProvider,
        client: &EmbeddingClient,
    ) -> Result<Self> {
        gold.validate(sources, targets)?;
        let s = prepare_dictionary(sources, keywords, client)?;
        let t = prepare_dictionary(targets, keywords, client)?;
        Ok(Self::new(FeatureMatrix::build(&s, &t)?, gold)?.with_labels(sources, targets))
    }

    pub fn source_label(&self, name: &str) -> Option<&str> {
        self.source_labels.get(name).map(String::as_str)
    }

    pub fn target_label(&self, name: &str) -> Option<&str> {
        self.target_labels.get(name).map(String::as_str)
    }

    /// Sources with at least one gold target, in matrix order.
    pub fn eligible_sources(&self) -> Vec<String> {
        self.matrix.sources().iter().filter(|s| self.gold.targets_of(s).is_some()).cloned().collect()
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }
}

/// Seeded 4:1 split; the test share is `floor(n / 5)`. Both halves keep
/// the input order.
pub fn split_sources(sources: &[String], seed: u64) -> (Vec<String>, Vec<String>) {
    let mut shuffled: Vec<&String> = sources.iter().collect();
    shuffled.shuffle(&mut rng::stream(seed, &[rng::SPLIT]));
    let test: BTreeSet<&String> = shuffled[..sources.len() / 5].iter().copied().collect();
    sources.iter().cloned().partition(|s| !test.contains(s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_id: usize,
    pub seed: u64,
    pub fingerprint: String,
    pub schema: Vec<String>,
    pub train_sources: Vec<String>,
    pub test_sources: Vec<String>,
    pub n_train_pairs: usize,
    pub n_train_positive: usize,
    pub n_test_pairs: usize,
    pub tuned_params: ForestParams,
    pub cv_mrr: Vec<f64>,
    pub ensemble: MetricReport,
    pub baselines: BTreeMap<String, MetricReport>,
    pub model_hash: String,
}

impl TrialResult {
    /// Metrics for the ensemble or a named baseline.
    pub fn method(&self, name: &str) -> Option<&MetricReport> {
        if name == ENSEMBLE {
            Some(&self.ensemble)
        } else {
            self.baselines.get(name)
        }
    }
}

/// A trial with the artifacts needed for follow-up analyses.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub result: TrialResult,
    pub model: ForestModel,
    pub test_pairs: Vec<PairInstance>,
    pub lists: Vec<RankedList>,
}

pub(crate) fn baseline_reports(test_pairs: &[PairInstance]) -> Result<BTreeMap<String, MetricReport>> {
    BASELINES
        .iter()
        .map(|&(name, col)| {
            let scores: Vec<f64> = test_pairs.iter().map(|p| p.features[col]).collect();
            Ok((name.to_string(), MetricReport::from_lists(&lists_from_scores(test_pairs, &scores)?)))
        })
        .collect()
}

fn rank_with_model(model: &ForestModel, test_pairs: &[PairInstance]) -> Result<Vec<RankedList>> {
    lists_from_scores(test_pairs, &model.predict_many(test_pairs)?)
}

/// Runs trial `trial_id` with seed `base_seed + trial_id`.
pub fn run_trial(exp: &Experiment, cfg: &ExperimentConfig, schema: &FeatureSchema, trial_id: usize) -> Result<TrialOutcome> {
    let seed = cfg.base_seed.wrapping_add(trial_id as u64);
    let eligible = exp.eligible_sources();
    if eligible.len() < MIN_TRIAL_SOURCES {
        return Err(Error::TooFewSources { needed: MIN_TRIAL_SOURCES, have: eligible.len() });
    }
    let (train_sources, test_sources) = split_sources(&eligible, seed);
    let mut neg_rng = rng::stream(seed, &[rng::NEGATIVES]);
    let train = generate_training_pairs(&exp.gold, &train_sources, &exp.matrix, cfg.negatives_per_source, &mut neg_rng)?;
    let cv = grid_search_cv(&train, schema, &cfg.grid, cfg.cv_folds, seed)?;
    let model = train_forest(&train, schema, &cv.best, seed)?;
    let test_pairs = generate_test_pairs(&exp.gold, &test_sources, &train_sources, &exp.matrix)?;
    let lists = rank_with_model(&model, &test_pairs)?;
    let result = TrialResult {
        trial_id,
        seed,
        fingerprint: cfg.trial_fingerprint(exp, schema),
        schema: schema.names().to_vec(),
        n_train_pairs: train.len(),
        n_train_positive: train.iter().filter(|p| p.gold).count(),
        n_test_pairs: test_pairs.len(),
        train_sources,
        test_sources,
        tuned_params: cv.best,
        cv_mrr: cv.mean_mrr,
        ensemble: MetricReport::from_lists(&lists),
        baselines: baseline_reports(&test_pairs)?,
        model_hash: model.content_hash()?,
    };
    Ok(TrialOutcome { result, model, test_pairs, lists })
}

/// Per-trial result files in one directory. Files are written through a
/// temporary name and renamed, so a crash never leaves a partial record.
#[derive(Debug, Clone)]
pub struct TrialStore {
    dir: PathBuf,
}

impl TrialStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(TrialStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn sub(&self, name: &str) -> Result<Self> {
        Self::open(self.dir.join(name))
    }

    pub fn trial_path(&self, id: usize) -> PathBuf {
        self.dir.join(format!("trial_{id:03}.json"))
    }

    pub fn model_path(&self, id: usize) -> PathBuf {
        self.dir.join(format!("model_{id:03}.json"))
    }

    pub fn ranked_path(&self, id: usize) -> PathBuf {
        self.dir.join(format!("ranked_{id:03}.csv"))
    }

    fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    fn save(&self, outcome: &TrialOutcome) -> Result<()> {
        let id = outcome.result.trial_id;
        Self::write_atomic(&self.model_path(id), outcome.model.to_json()?.as_bytes())?;
        Self::write_atomic(&self.ranked_path(id), ranked_lists_csv(&outcome.lists)?.as_bytes())?;
        // the trial record goes last: its presence marks the trial complete
        Self::write_atomic(&self.trial_path(id), serde_json::to_string_pretty(&outcome.result)?.as_bytes())
    }

    /// A completed trial whose fingerprint matches, rebuilt from disk.
    fn load(&self, exp: &Experiment, id: usize, fingerprint: &str) -> Result<Option<TrialOutcome>> {
        let path = self.trial_path(id);
        let Ok(raw) = std::fs::read_to_string(&path) else {
            return Ok(None);
        };
        let Ok(result) = serde_json::from_str::<TrialResult>(&raw) else {
            return Ok(None);
        };
        if result.fingerprint != fingerprint {
            return Ok(None);
        }
        let Ok(model) = ForestModel::load(&self.model_path(id)) else {
            return Ok(None);
        };
        if model.content_hash()? != result.model_hash {
            return Ok(None);
        }
        let test_pairs = generate_test_pairs(&exp.gold, &result.test_sources, &result.train_sources, &exp.matrix)?;
        let lists = rank_with_model(&model, &test_pairs)?;
        Ok(Some(TrialOutcome { result, model, test_pairs, lists }))
    }
}

/// Results of a batch of trials, with which trials were recomputed.
#[derive(Debug, Clone)]
pub struct TrialRun<T> {
    pub results: Vec<TrialResult>,
    pub extras: Vec<T>,
    pub computed: Vec<usize>,
}

/// Runs `cfg.n_trials` trials in parallel, reusing completed trials found in
/// `store`, and applies `analyze` to every outcome.
pub fn run_trials_with<T, F>(exp: &Experiment, cfg: &ExperimentConfig, schema: &FeatureSchema, store: Option<&TrialStore>, analyze: F) -> Result<TrialRun<T>>
where
    T: Send,
    F: Fn(&TrialOutcome) -> Result<T> + Sync,
{
    cfg.validate()?;
    if cfg.n_trials < 2 {
        return Err(Error::Invalid("at least two trials are needed".into()));
    }
    let fingerprint = cfg.trial_fingerprint(exp, schema);
    let done: Vec<(TrialResult, T, bool)> = (0..cfg.n_trials)
        .into_par_iter()
        .map(|id| {
            let cached = match store {
                Some(s) => s.load(exp, id, &fingerprint)?,
                None => None,
            };
            let (outcome, computed) = match cached {
                Some(o) => (o, false),
                None => {
                    let o = run_trial(exp, cfg, schema, id)?;
                    if let Some(s) = store {
                        s.save(&o)?;
                    }
                    (o, true)
                }
            };
            let extra = analyze(&outcome)?;
            Ok((outcome.result, extra, computed))
        })
        .collect::<Result<_>>()?;
    let mut run = TrialRun { results: Vec::new(), extras: Vec::new(), computed: Vec::new() };
    for (r, e, c) in done {
        if c {
            run.computed.push(r.trial_id);
        }
        run.results.push(r);
        run.extras.push(e);
    }
    Ok(run)
}

pub fn run_trials(exp: &Experiment, cfg: &ExperimentConfig, schema: &FeatureSchema, store: Option<&TrialStore>) -> Result<TrialRun<()>> {
    run_trials_with(exp, cfg, schema, store, |_| Ok(()))
}

/// Values of `metric` for `method` across trials.
pub fn metric_series(results: &[TrialResult], method: &str, metric: &str) -> Result<Vec<f64>> {
    results
        .iter()
        .map(|r| {
            r.method(method)
                .and_then(|m| m.metric(metric))
                .ok_or_else(|| Error::Invalid(format!("no `{metric}` for method `{method}`")))
        })
        .collect()
}

/// The baseline with the highest mean MRR; ties go to the earlier baseline.
pub fn best_baseline(results: &[TrialResult]) -> Result<&'static str> {
    let mut best: Option<(&'static str, f64)> = None;
    for &(name, _) in &BASELINES {
        let s = metric_series(results, name, "MRR")?;
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        if best.is_none_or(|(_, m)| mean > m) {
            best = Some((name, mean));
        }
    }
    best.map(|b| b.0).ok_or(Error::EmptyInput)
}

/// Paired tests of the ensemble against `baseline` for each metric.
pub fn compare_methods(results: &[TrialResult], a: &str, b: &str, metrics: &[String]) -> Result<BTreeMap<String, Comparison>> {
    metrics
        .iter()
        .map(|m| Ok((m.clone(), paired_t_test(&metric_series(results, a, m)?, &metric_series(results, b, m)?)?)))
        .collect()
}

/// Permutation importance over all trials, with per-trial reuse from `store`.
pub fn importance_over_trials(exp: &Experiment, cfg: &ExperimentConfig, store: Option<&TrialStore>) -> Result<Vec<ImportanceRow>> {
    let run = run_trials_with(exp, cfg, &FeatureSchema::full(), store, |o| {
        let mut r = rng::stream(o.result.seed, &[rng::PERMUTE]);
        permutation_importance(&o.model, &o.test_pairs, &cfg.importance_metrics, &mut r, cfg.importance_repeats)
    })?;
    summarize_importance(&run.extras, &cfg.importance_metrics)
}

/// One ablated group: performance of the full model minus the partial one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub group: String,
    pub dropped: Vec<String>,
    pub full_minus_partial: BTreeMap<String, Comparison>,
}

/// Reruns all trials with each feature group removed (retuned and
/// retrained) and tests the drop against the full model.
pub fn ablation(exp: &Experiment, cfg: &ExperimentConfig, store: Option<&TrialStore>) -> Result<(Vec<TrialResult>, Vec<AblationRow>)> {
    cfg.validate()?;
    let groups = cfg.resolve_groups()?;
    let sub = |name: &str| store.map(|s| s.sub(name)).transpose();
    let full = run_trials(exp, cfg, &FeatureSchema::full(), sub("full")?.as_ref())?.results;
    let mut rows = Vec::new();
    for (name, cols) in groups {
        let keep: Vec<usize> = (0..FEATURE_NAMES.len()).filter(|c| !cols.contains(c)).collect();
        let schema = FeatureSchema::select(&keep)?;
        let partial = run_trials(exp, cfg, &schema, sub(&format!("without_{name}"))?.as_ref())?.results;
        let mut cmp = BTreeMap::new();
        for m in &cfg.metrics {
            cmp.insert(m.clone(), paired_t_test(&metric_series(&full, ENSEMBLE, m)?, &metric_series(&partial, ENSEMBLE, m)?)?);
        }
        rows.push(AblationRow { group: name, dropped: cols.iter().map(|&c| FEATURE_NAMES[c].to_string()).collect(), full_minus_partial: cmp });
    }
    Ok((full, rows))
}
