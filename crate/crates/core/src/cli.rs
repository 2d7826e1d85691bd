//! The `harmony` command line. Every subcommand except `serve` is a pure
//! function of its input files, flags and seed.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dictionary::{corpus_stats, long_to_wide, read_dictionary, read_long_rows, ColumnMap, DataDictionary, Provenance, ReshapeSpec, Side};
use crate::embedding::{
    EmbeddingCache, EmbeddingClient, EmbeddingProvider, HashEmbedder, HttpEmbeddingProvider, HttpKeywordProvider, VectorFileProvider,
    CACHE_DIR_ENV,
};
use crate::error::{Error, Result};
use crate::features::{generate_test_pairs, generate_training_pairs, prepare_dictionary, FeatureMatrix, FeatureSchema, GoldPairs, FEATURE_NAMES};
use crate::forest::{grid_search_cv, train_forest, ForestModel, ForestParams};
use crate::harness::{
    self, ablation, ablation_csv, importance_csv, importance_over_trials, low_rank_csv, report_low_ranked, run_trials, run_trials_with,
    write_trial_reports, Experiment, ExperimentConfig, TrialStore,
};
use crate::rank::{lists_from_scores, MetricReport};
use crate::rng;
use crate::service::{self, rank_candidates, CandidateList, LabelStore, ModelVersion, ServiceSettings, ServiceState};
use crate::text::{KeywordProvider, TermFrequencyExtractor};

pub const DEFAULT_ENDPOINT: &str = "http://127.0.0.1:8765";
pub const TOKEN_ENV: &str = "HARMONY_TOKEN";

#[derive(Debug, Parser)]
#[command(name = "harmony", version, about = "Rank candidate variable matches between two data dictionaries")]
pub struct Cli {
    /// Overrides the config's base seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Experiment config (JSON); missing keys take defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Persistent embedding cache.
    #[arg(long, global = true, env = CACHE_DIR_ENV)]
    pub cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Columns {
    #[arg(long, default_value = "name")]
    pub col_name: String,
    #[arg(long, default_value = "label")]
    pub col_label: String,
    #[arg(long, default_value = "sheet_desc")]
    pub col_sheet: String,
    #[arg(long, default_value = "derivation_rule")]
    pub col_rule: String,
}

impl Columns {
    fn map(&self) -> ColumnMap {
        ColumnMap { name: self.col_name.clone(), label: self.col_label.clone(), sheet: self.col_sheet.clone(), rule: self.col_rule.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    /// The embedding sidecar over HTTP.
    Http,
    /// Seeded feature hashing; offline and for tests.
    Hash,
    /// Precomputed vector files.
    Vectors,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KeywordSource {
    /// The sidecar for `--provider http`, term frequency otherwise.
    Auto,
    Sidecar,
    Tf,
}

#[derive(Debug, Clone, Args)]
pub struct ProviderArgs {
    #[arg(long, value_enum, default_value = "http")]
    pub provider: ProviderKind,
    /// Sidecar base URL; `HARMONY_EMBED_ENDPOINT` takes precedence.
    #[arg(long, default_value = DEFAULT_ENDPOINT)]
    pub endpoint: String,
    /// Vector files for `--provider vectors`.
    #[arg(long = "vectors", num_args = 1..)]
    pub vectors: Vec<PathBuf>,
    #[arg(long, default_value_t = 256)]
    pub hash_dim: usize,
    #[arg(long, default_value_t = 0)]
    pub hash_seed: u64,
    #[arg(long, value_enum, default_value = "auto")]
    pub keywords: KeywordSource,
}

#[derive(Debug, Clone, Args)]
pub struct Corpus {
    #[arg(long)]
    pub sources: PathBuf,
    #[arg(long)]
    pub targets: PathBuf,
    #[command(flatten)]
    pub columns: Columns,
    #[command(flatten)]
    pub provider: ProviderArgs,
}

#[derive(Debug, Clone, Args)]
pub struct Labeled {
    #[command(flatten)]
    pub corpus: Corpus,
    /// CSV of known matches with `source,target` columns.
    #[arg(long)]
    pub gold: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrialArgs {
    #[command(flatten)]
    pub data: Labeled,
    /// Number of trials; overrides the config.
    #[arg(long)]
    pub n: Option<usize>,
    /// Reports go here; per-trial files go under `trials/` and are reused
    /// on rerun.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SideArg {
    Source,
    Target,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Side {
        match s {
            SideArg::Source => Side::Source,
            SideArg::Target => Side::Target,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a dictionary, print corpus statistics and optionally write it
    /// with canonical headers.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "source")]
        side: SideArg,
        #[command(flatten)]
        columns: Columns,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn question/response rows into one variable per question.
    Reshape {
        #[arg(long)]
        input: PathBuf,
        /// JSON with key_variable, value_variable, name_template, label_template.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value = "")]
        sheet: String,
        #[arg(long, value_enum, default_value = "source")]
        side: SideArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fetch and cache embeddings for every text of the given dictionaries.
    EmbedCache {
        #[arg(long = "dict", required = true, num_args = 1..)]
        dicts: Vec<PathBuf>,
        #[command(flatten)]
        columns: Columns,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Rank target candidates for every source variable.
    Match {
        #[command(flatten)]
        corpus: Corpus,
        /// Trained model; without one a fixed similarity average ranks.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        top: usize,
        /// Add the 18 feature values to each row.
        #[arg(long)]
        explain: bool,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a forest on every gold source, tuning over the config's grid.
    Train {
        #[command(flatten)]
        data: Labeled,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics of a trained model and the single-feature baselines on the
    /// gold sources.
    Evaluate {
        #[command(flatten)]
        data: Labeled,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeated train/test trials with baseline comparisons.
    Trials(TrialArgs),
    /// Permutation importance across trials.
    Importance(TrialArgs),
    /// Feature-group ablation across trials.
    Ablate(TrialArgs),
    /// Gold pairs ranked below the cutoff, with their top competitors.
    Errors {
        #[command(flatten)]
        trials: TrialArgs,
        /// Overrides the config's low-rank cutoff.
        #[arg(long)]
        cutoff: Option<usize>,
    },
    /// HTTP API for the review console.
    Serve {
        #[command(flatten)]
        corpus: Corpus,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Append-only label log.
        #[arg(long, default_value = "labels.jsonl")]
        labels: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: std::net::SocketAddr,
        #[arg(long, env = TOKEN_ENV)]
        token: Option<String>,
        /// Retrained models are saved here.
        #[arg(long)]
        model_dir: Option<PathBuf>,
        /// Trial directory behind /api/metrics.
        #[arg(long)]
        trials_dir: Option<PathBuf>,
    },
}

/// Process exit code for an error: 2 when the embedding provider could not
/// be reached, 1 otherwise.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ProviderUnavailable { .. } => 2,
        _ => 1,
    }
}

struct Ctx {
    cfg: ExperimentConfig,
    cache_dir: Option<PathBuf>,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self> {
        let mut cfg = match &cli.config {
            Some(p) => ExperimentConfig::from_json_file(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = cli.seed {
            cfg.base_seed = seed;
        }
        Ok(Ctx { cfg, cache_dir: cli.cache_dir.clone() })
    }

    fn embedding(&self, args: &ProviderArgs) -> Result<(EmbeddingClient, Box<dyn KeywordProvider>)> {
        let provider: Arc<dyn EmbeddingProvider> = match args.provider {
            ProviderKind::Http => Arc::new(HttpEmbeddingProvider::from_env_or(&args.endpoint)),
            ProviderKind::Hash => Arc::new(HashEmbedder::new(args.hash_dim, args.hash_seed)),
            ProviderKind::Vectors => {
                if args.vectors.is_empty() {
                    return Err(Error::Invalid("--provider vectors needs at least one --vectors file".into()));
                }
                Arc::new(VectorFileProvider::open(&args.vectors)?)
            }
        };
        let use_sidecar = match args.keywords {
            KeywordSource::Auto => args.provider == ProviderKind::Http,
            KeywordSource::Sidecar => true,
            KeywordSource::Tf => false,
        };
        let keywords: Box<dyn KeywordProvider> = if use_sidecar {
            Box::new(HttpKeywordProvider::new(provider_endpoint(args)))
        } else {
            Box::new(TermFrequencyExtractor)
        };
        let mut client = EmbeddingClient::new(provider);
        if let Some(dir) = &self.cache_dir {
            client = client.with_cache(Arc::new(EmbeddingCache::open(dir)?));
        }
        Ok((client, keywords))
    }

    fn dictionaries(&self, c: &Corpus) -> Result<(DataDictionary, DataDictionary)> {
        let cols = c.columns.map();
        Ok((read_dictionary(&c.sources, Side::Source, &cols)?, read_dictionary(&c.targets, Side::Target, &cols)?))
    }

    fn matrix(&self, c: &Corpus) -> Result<(DataDictionary, DataDictionary, FeatureMatrix)> {
        let (s, t) = self.dictionaries(c)?;
        let (client, keywords) = self.embedding(&c.provider)?;
        let ps = prepare_dictionary(&s, keywords.as_ref(), &client)?;
        let pt = prepare_dictionary(&t, keywords.as_ref(), &client)?;
        let m = FeatureMatrix::build(&ps, &pt)?;
        Ok((s, t, m))
    }

    fn experiment(&self, l: &Labeled) -> Result<Experiment> {
        let (s, t) = self.dictionaries(&l.corpus)?;
        let gold = GoldPairs::read_csv(&l.gold)?;
        let (client, keywords) = self.embedding(&l.corpus.provider)?;
        Experiment::from_dictionaries(&s, &t, gold, keywords.as_ref(), &client)
    }

    fn trial_config(&self, n: Option<usize>) -> ExperimentConfig {
        let mut cfg = self.cfg.clone();
        if let Some(n) = n {
            cfg.n_trials = n;
        }
        cfg
    }
}

fn provider_endpoint(args: &ProviderArgs) -> String {
    crate::embedding::endpoint_from_env().unwrap_or_else(|| args.endpoint.clone())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, body: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Writes to `out`, or to stdout when no path is given.
fn emit(out: Option<&Path>, body: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_file(p, body),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(body).and_then(|_| so.flush()).map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn say(msg: impl AsRef<str>) -> Result<()> {
    emit(None, format!("{}\n", msg.as_ref()).as_bytes())
}

fn candidates_csv(lists: &[CandidateList], explain: bool) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = vec!["source", "rank", "target", "target_label", "score", "model_version"];
    if explain {
        header.extend(FEATURE_NAMES);
    }
    w.write_record(&header)?;
    for l in lists {
        for c in &l.candidates {
            let mut row = vec![l.source.clone(), c.rank.to_string(), c.target.clone(), c.label.clone(), c.score.to_string(), l.model_version.clone()];
            if let Some(f) = &c.features {
                row.extend(FEATURE_NAMES.iter().map(|n| f[*n].to_string()));
            }
            w.write_record(&row)?;
        }
    }
    w.into_inner().map_err(|e| Error::Invalid(e.to_string()))
}

#[derive(Serialize)]
struct TrainSummary {
    model_hash: String,
    n_pairs: usize,
    n_positive: usize,
    params: ForestParams,
    cv_mrr: Vec<f64>,
}

/// Tunes on all gold sources and trains the final forest.
fn train_on_gold(exp: &Experiment, cfg: &ExperimentConfig) -> Result<(ForestModel, TrainSummary)> {
    let seed = cfg.base_seed;
    let sources = exp.eligible_sources();
    let mut r = rng::stream(seed, &[rng::NEGATIVES]);
    let pairs = generate_training_pairs(&exp.gold, &sources, &exp.matrix, cfg.negatives_per_source, &mut r)?;
    let schema = FeatureSchema::full();
    let cv = grid_search_cv(&pairs, &schema, &cfg.grid, cfg.cv_folds, seed)?;
    let model = train_forest(&pairs, &schema, &cv.best, seed)?;
    let summary = TrainSummary {
        model_hash: model.content_hash()?,
        n_pairs: pairs.len(),
        n_positive: pairs.iter().filter(|p| p.gold).count(),
        params: cv.best,
        cv_mrr: cv.mean_mrr,
    };
    Ok((model, summary))
}

fn evaluate(exp: &Experiment, model: &ForestModel) -> Result<BTreeMap<String, MetricReport>> {
    let pairs = generate_test_pairs(&exp.gold, &exp.eligible_sources(), &[], &exp.matrix)?;
    let mut out = harness::baseline_reports(&pairs)?;
    out.insert(harness::ENSEMBLE.to_string(), MetricReport::from_lists(&lists_from_scores(&pairs, &model.predict_many(&pairs)?)?));
    Ok(out)
}

fn serve_params(cfg: &ExperimentConfig) -> ForestParams {
    match cfg.grid.as_slice() {
        [only] => only.clone(),
        _ => ForestParams::default(),
    }
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Invalid(e.to_string()))?;
    execute(cli)
}

pub fn execute(cli: Cli) -> Result<()> {
    let ctx = Ctx::new(&cli)?;
    match cli.command {
        Command::Ingest { input, side, columns, out } => {
            let dict = read_dictionary(&input, side.into(), &columns.map())?;
            if let Some(out) = out {
                let mut buf = Vec::new();
                dict.write_csv(&mut buf)?;
                write_file(&out, &buf)?;
            }
            emit(None, &json(&corpus_stats(&dict)?)?)
        }
        Command::Reshape { input, spec, sheet, side, out } => {
            let spec = ReshapeSpec::from_json_file(&spec)?;
            let file = std::fs::File::open(&input).map_err(|e| Error::io(&input, e))?;
            let records = long_to_wide(&read_long_rows(file, &spec)?, &spec, &sheet, side.into())?;
            let dict = DataDictionary::from_records(side.into(), records, Provenance { path: Some(input), format: "csv".into() })?;
            let mut buf = Vec::new();
            dict.write_csv(&mut buf)?;
            emit(out.as_deref(), &buf)
        }
        Command::EmbedCache { dicts, columns, provider } => {
            if ctx.cache_dir.is_none() {
                return Err(Error::Invalid(format!("embed-cache needs --cache-dir or {CACHE_DIR_ENV}")));
            }
            let (client, keywords) = ctx.embedding(&provider)?;
            let mut n = 0;
            for path in &dicts {
                let dict = read_dictionary(path, Side::Source, &columns.map())?;
                n += prepare_dictionary(&dict, keywords.as_ref(), &client)?.len();
            }
            say(format!("cached embeddings for {n} variables"))
        }
        Command::Match { corpus, model, top, explain, format, out } => {
            if top == 0 {
                return Err(Error::Invalid("--top must be positive".into()));
            }
            let version = match &model {
                Some(p) => ModelVersion::trained(0, ForestModel::load(p)?)?,
                None => ModelVersion::heuristic(),
            };
            let (sources, targets, matrix) = ctx.matrix(&corpus)?;
            let lists = sources
                .iter()
                .map(|r| rank_candidates(&matrix, &targets, &version, &r.name, top, explain))
                .collect::<Result<Vec<_>>>()?;
            let body = match format {
                Format::Csv => candidates_csv(&lists, explain)?,
                Format::Json => json(&lists)?,
            };
            emit(out.as_deref(), &body)
        }
        Command::Train { data, out } => {
            let exp = ctx.experiment(&data)?;
            let (model, summary) = train_on_gold(&exp, &ctx.cfg)?;
            model.save(&out)?;
            emit(None, &json(&summary)?)
        }
        Command::Evaluate { data, model, out } => {
            let exp = ctx.experiment(&data)?;
            let model = ForestModel::load(&model)?;
            emit(out.as_deref(), &json(&evaluate(&exp, &model)?)?)
        }
        Command::Trials(args) => {
            let cfg = ctx.trial_config(args.n);
            let exp = ctx.experiment(&args.data)?;
            let store = TrialStore::open(args.out_dir.join("trials"))?;
            let run = run_trials(&exp, &cfg, &FeatureSchema::full(), Some(&store))?;
            write_trial_reports(&args.out_dir, &exp, &run.results, &cfg.metrics)?;
            say(format!("{} trials ({} computed); reports in {}", run.results.len(), run.computed.len(), args.out_dir.display()))
        }
        Command::Importance(args) => {
            let cfg = ctx.trial_config(args.n);
            let exp = ctx.experiment(&args.data)?;
            let store = TrialStore::open(args.out_dir.join("trials"))?;
            let rows = importance_over_trials(&exp, &cfg, Some(&store))?;
            write_file(&args.out_dir.join("importance.csv"), importance_csv(&rows, &cfg.importance_metrics)?.as_bytes())?;
            say(format!("importance for {} features in {}", rows.len(), args.out_dir.display()))
        }
        Command::Ablate(args) => {
            let cfg = ctx.trial_config(args.n);
            let exp = ctx.experiment(&args.data)?;
            let store = TrialStore::open(args.out_dir.join("trials"))?;
            let (full, rows) = ablation(&exp, &cfg, Some(&store))?;
            write_trial_reports(&args.out_dir, &exp, &full, &cfg.metrics)?;
            write_file(&args.out_dir.join("ablation.csv"), ablation_csv(&rows, &cfg.metrics)?.as_bytes())?;
            say(format!("ablated {} groups; reports in {}", rows.len(), args.out_dir.display()))
        }
        Command::Errors { trials: args, cutoff } => {
            let cfg = ctx.trial_config(args.n);
            let cutoff = cutoff.unwrap_or(cfg.low_rank_cutoff);
            let exp = ctx.experiment(&args.data)?;
            let store = TrialStore::open(args.out_dir.join("trials"))?;
            let run = run_trials_with(&exp, &cfg, &FeatureSchema::full(), Some(&store), |o| {
                Ok(report_low_ranked(&o.lists, cutoff, Some(&exp)).into_iter().map(|r| (o.result.trial_id, r)).collect::<Vec<_>>())
            })?;
            let rows: Vec<_> = run.extras.into_iter().flatten().collect();
            write_file(&args.out_dir.join("low_rank.csv"), low_rank_csv(&rows)?.as_bytes())?;
            say(format!("{} gold pairs ranked below {cutoff}", rows.len()))
        }
        Command::Serve { corpus, model, labels, addr, token, model_dir, trials_dir } => {
            let initial = model.as_deref().map(ForestModel::load).transpose()?;
            let (sources, targets, matrix) = ctx.matrix(&corpus)?;
            let settings = ServiceSettings {
                token,
                model_dir,
                trials_dir,
                seed: ctx.cfg.base_seed,
                negatives_per_source: ctx.cfg.negatives_per_source,
                params: serve_params(&ctx.cfg),
            };
            let state = Arc::new(ServiceState::new(sources, targets, matrix, LabelStore::open(labels)?, initial, settings)?);
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
            eprintln!("listening on http://{addr}");
            rt.block_on(service::serve(state, addr))
        }
    }
}
