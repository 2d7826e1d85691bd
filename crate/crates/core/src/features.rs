//! Pair features and training/test pair sets.
//!
//! Every (source, target) pair is described by 18 numbers: cosine
//! similarity from three embedding models and token-set fuzzy similarity,
//! each over three texts (label, sheet description, label plus derivation
//! keywords), followed by six dictionary-metadata features.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dictionary::{read_table, DataDictionary, VariableRecord};
use crate::embedding::{cosine_slices, EmbeddingClient, MODEL_IDS};
use crate::error::{Error, Result};
use crate::fuzzy::token_set_ratio;
use crate::text::{build_match_texts, derive_keyword_text, normalize_for_fuzzy, word_count, KeywordProvider, MatchTexts, NormalizedText};

pub const N_FEATURES: usize = 18;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "E5_on_label",
    "E5_on_sheet",
    "E5_on_label_key",
    "MPNet_on_label",
    "MPNet_on_sheet",
    "MPNet_on_label_key",
    "MiniLM_on_label",
    "MiniLM_on_sheet",
    "MiniLM_on_label_key",
    "Fuzzy_on_label",
    "Fuzzy_on_sheet",
    "Fuzzy_on_label_key",
    "Label_len_EU",
    "Label_len_JP",
    "Derive_info_len_EU",
    "Derive_info_len_JP",
    "Derive_info_null_EU",
    "Derive_info_null_JP",
];

/// Label-similarity slot of each single-method baseline.
pub const BASELINES: [(&str, usize); 4] = [("E5", 0), ("MPNet", 3), ("MiniLM", 6), ("Fuzzy", 9)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureGroup {
    #[serde(rename = "LLM")]
    Llm,
    Fuzzy,
    Other,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 3] = [FeatureGroup::Llm, FeatureGroup::Fuzzy, FeatureGroup::Other];

    pub fn name(self) -> &'static str {
        match self {
            FeatureGroup::Llm => "LLM",
            FeatureGroup::Fuzzy => "Fuzzy",
            FeatureGroup::Other => "Other",
        }
    }

    /// Column indices of the group in the full schema.
    pub fn columns(self) -> std::ops::Range<usize> {
        match self {
            FeatureGroup::Llm => 0..9,
            FeatureGroup::Fuzzy => 9..12,
            FeatureGroup::Other => 12..18,
        }
    }
}

/// An ordered subset of the 18 named features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    names: Vec<String>,
    columns: Vec<usize>,
}

impl Default for FeatureSchema {
    fn default() -> Self {
        Self::full()
    }
}

impl FeatureSchema {
    pub fn full() -> Self {
        FeatureSchema { names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(), columns: (0..N_FEATURES).collect() }
    }

    /// Keeps the given full-schema columns, in ascending order.
    pub fn select(columns: &[usize]) -> Result<Self> {
        let set: BTreeSet<usize> = columns.iter().copied().collect();
        if set.is_empty() || set.iter().any(|&c| c >= N_FEATURES) {
            return Err(Error::Invalid(format!("invalid feature selection {columns:?}")));
        }
        let columns: Vec<usize> = set.into_iter().collect();
        Ok(FeatureSchema { names: columns.iter().map(|&c| FEATURE_NAMES[c].to_string()).collect(), columns })
    }

    pub fn without(groups: &[FeatureGroup]) -> Result<Self> {
        let keep: Vec<usize> = (0..N_FEATURES).filter(|c| !groups.iter().any(|g| g.columns().contains(c))).collect();
        Self::select(&keep)
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn is_full(&self) -> bool {
        self.columns.len() == N_FEATURES
    }

    /// Picks this schema's columns out of a full 18-feature vector.
    pub fn project(&self, full: &[f64]) -> Vec<f64> {
        self.columns.iter().map(|&c| full[c]).collect()
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"feature-schema-v1\n");
        for n in &self.names {
            h.update(n.as_bytes());
            h.update(b"\n");
        }
        hex::encode(&h.finalize()[..8])
    }
}

/// Curated (source, target) matches.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldPairs {
    by_source: BTreeMap<String, BTreeSet<String>>,
}

impl GoldPairs {
    pub fn new<I, S, T>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        let mut by_source: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (s, t) in pairs {
            by_source.entry(s.into()).or_default().insert(t.into());
        }
        GoldPairs { by_source }
    }

    /// Reads a CSV with `source_var` and `target_var` columns.
    pub fn parse_csv<R: Read>(reader: R) -> Result<Self> {
        let (header, rows) = read_table(reader)?;
        let col = |name: &str| header.iter().position(|h| h.trim() == name).ok_or_else(|| Error::MissingColumn(name.into()));
        let (s, t) = (col("source_var")?, col("target_var")?);
        let mut pairs = Vec::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            let get = |ix: usize| r.get(ix).map(|c| c.trim().to_string()).unwrap_or_default();
            let (src, tgt) = (get(s), get(t));
            if src.is_empty() || tgt.is_empty() {
                return Err(Error::Invalid(format!("gold row {i}: empty variable name")));
            }
            pairs.push((src, tgt));
        }
        Ok(Self::new(pairs))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(f)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["source_var", "target_var"])?;
        for (s, t) in self.pairs() {
            w.write_record([s, t])?;
        }
        w.flush().map_err(|e| Error::io("<gold csv>", e))?;
        Ok(())
    }

    /// Checks every name against its dictionary.
    pub fn validate(&self, sources: &DataDictionary, targets: &DataDictionary) -> Result<()> {
        for (s, t) in self.pairs() {
            if !sources.contains(s) {
                return Err(Error::UnknownVariable(s.to_string()));
            }
            if !targets.contains(t) {
                return Err(Error::UnknownVariable(t.to_string()));
            }
        }
        Ok(())
    }

    pub fn targets_of(&self, source: &str) -> Option<&BTreeSet<String>> {
        self.by_source.get(source)
    }

    pub fn is_match(&self, source: &str, target: &str) -> bool {
        self.by_source.get(source).is_some_and(|t| t.contains(target))
    }

    pub fn sources(&self) -> impl Iterator<Item = &str> {
        self.by_source.keys().map(String::as_str)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.by_source.iter().flat_map(|(s, ts)| ts.iter().map(move |t| (s.as_str(), t.as_str())))
    }

    pub fn n_pairs(&self) -> usize {
        self.by_source.values().map(BTreeSet::len).sum()
    }

    pub fn n_sources(&self) -> usize {
        self.by_source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_source.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextKind {
    Label = 0,
    Sheet = 1,
    LabelKey = 2,
}

impl TextKind {
    pub const ALL: [TextKind; 3] = [TextKind::Label, TextKind::Sheet, TextKind::LabelKey];

    pub fn of(self, texts: &MatchTexts) -> &str {
        match self {
            TextKind::Label => &texts.label_text,
            TextKind::Sheet => &texts.sheet_text,
            TextKind::LabelKey => &texts.label_key_text,
        }
    }
}

/// A variable with everything needed to score it against another.
#[derive(Debug, Clone)]
pub struct PreparedVariable {
    pub record: VariableRecord,
    pub texts: MatchTexts,
    /// Normalized fuzzy inputs, indexed by [`TextKind`].
    pub fuzzy: [NormalizedText; 3],
    /// `embeddings[model][text kind]`.
    pub embeddings: [[Arc<[f32]>; 3]; 3],
}

impl PreparedVariable {
    /// Prepares a variable from precomputed embeddings.
    pub fn new(record: VariableRecord, texts: MatchTexts, embeddings: [[Arc<[f32]>; 3]; 3]) -> Self {
        let fuzzy = TextKind::ALL.map(|k| normalize_for_fuzzy(k.of(&texts)));
        PreparedVariable { record, texts, fuzzy, embeddings }
    }
}

/// Derives match texts and fetches embeddings for a whole dictionary.
pub fn prepare_dictionary(
    dict: &DataDictionary,
    keywords: &dyn KeywordProvider,
    client: &EmbeddingClient,
) -> Result<Vec<PreparedVariable>> {
    let texts: Vec<MatchTexts> = dict
        .iter()
        .map(|r| Ok(build_match_texts(r, &derive_keyword_text(&r.derivation_rule, keywords)?)))
        .collect::<Result<_>>()?;
    let flat: Vec<String> = texts.iter().flat_map(|t| TextKind::ALL.map(|k| k.of(t).to_string())).collect();
    let mut per_model = Vec::with_capacity(MODEL_IDS.len());
    for model in MODEL_IDS {
        per_model.push(client.embed_batch(&flat, model)?);
    }
    Ok(dict
        .iter()
        .zip(texts)
        .enumerate()
        .map(|(i, (rec, t))| {
            let emb = [0, 1, 2].map(|m| [0, 1, 2].map(|k| per_model[m][3 * i + k].values.clone()));
            PreparedVariable::new(rec.clone(), t, emb)
        })
        .collect())
}

/// Full 18-feature vector for one pair.
pub fn build_pair_features(src: &PreparedVariable, tgt: &PreparedVariable) -> Result<[f64; N_FEATURES]> {
    let mut f = [0.0; N_FEATURES];
    for m in 0..3 {
        for k in 0..3 {
            // negative cosines carry no ranking signal here; clamp into [0, 1]
            f[3 * m + k] = cosine_slices(&src.embeddings[m][k], &tgt.embeddings[m][k])?.max(0.0);
        }
    }
    for k in 0..3 {
        f[9 + k] = token_set_ratio(&src.fuzzy[k], &tgt.fuzzy[k]).unit();
    }
    let (s, t) = (&src.record, &tgt.record);
    f[12] = word_count(&s.label) as f64;
    f[13] = word_count(&t.label) as f64;
    f[14] = word_count(&s.derivation_rule) as f64;
    f[15] = word_count(&t.derivation_rule) as f64;
    f[16] = f64::from(u8::from(!s.has_rule()));
    f[17] = f64::from(u8::from(!t.has_rule()));
    Ok(f)
}

/// Dense features for every (source, target) pair.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    sources: Vec<String>,
    targets: Vec<String>,
    source_ix: HashMap<String, usize>,
    target_ix: HashMap<String, usize>,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn build(sources: &[PreparedVariable], targets: &[PreparedVariable]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = sources
            .par_iter()
            .map(|s| {
                let mut row = Vec::with_capacity(targets.len() * N_FEATURES);
                for t in targets {
                    row.extend_from_slice(&build_pair_features(s, t)?);
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        Ok(Self::assemble(
            sources.iter().map(|v| v.record.name.clone()).collect(),
            targets.iter().map(|v| v.record.name.clone()).collect(),
            rows.concat(),
        ))
    }

    /// Builds a matrix from an arbitrary feature function.
    pub fn from_fn(
        sources: Vec<String>,
        targets: Vec<String>,
        mut f: impl FnMut(usize, usize) -> [f64; N_FEATURES],
    ) -> Self {
        let mut data = Vec::with_capacity(sources.len() * targets.len() * N_FEATURES);
        for s in 0..sources.len() {
            for t in 0..targets.len() {
                data.extend_from_slice(&f(s, t));
            }
        }
        Self::assemble(sources, targets, data)
    }

    fn assemble(sources: Vec<String>, targets: Vec<String>, data: Vec<f64>) -> Self {
        let source_ix = sources.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let target_ix = targets.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        FeatureMatrix { sources, targets, source_ix, target_ix, data }
    }

    pub fn sources(&self) -> &[String] {
        &self.sources
    }

    pub fn targets(&self) -> &[String] {
        &self.targets
    }

    pub fn source_index(&self, name: &str) -> Option<usize> {
        self.source_ix.get(name).copied()
    }

    pub fn target_index(&self, name: &str) -> Option<usize> {
        self.target_ix.get(name).copied()
    }

    pub fn features(&self, source: usize, target: usize) -> &[f64] {
        let start = (source * self.targets.len() + target) * N_FEATURES;
        &self.data[start..start + N_FEATURES]
    }

    /// Hash over names and feature bits.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for n in self.sources.iter().chain(&self.targets) {
            h.update(n.as_bytes());
            h.update(b"\n");
        }
        for v in &self.data {
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(&h.finalize()[..16])
    }

    pub fn instance(&self, source: usize, target: usize, gold: &GoldPairs) -> PairInstance {
        let (s, t) = (&self.sources[source], &self.targets[target]);
        PairInstance {
            source_name: s.clone(),
            target_name: t.clone(),
            features: self.features(source, target).to_vec(),
            gold: gold.is_match(s, t),
        }
    }

    fn require_source(&self, name: &str) -> Result<usize> {
        self.source_index(name).ok_or_else(|| Error::UnknownSource(name.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairInstance {
    pub source_name: String,
    pub target_name: String,
    pub features: Vec<f64>,
    pub gold: bool,
}

/// Training pairs: every gold pair of each source plus up to
/// `negatives_per_source` distinct non-gold targets drawn without
/// replacement.
pub fn generate_training_pairs<R: Rng + ?Sized>(
    gold: &GoldPairs,
    train_sources: &[String],
    matrix: &FeatureMatrix,
    negatives_per_source: usize,
    rng: &mut R,
) -> Result<Vec<PairInstance>> {
    if negatives_per_source == 0 {
        return Err(Error::Invalid("negatives_per_source must be at least 1".into()));
    }
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for name in train_sources {
        if !seen.insert(name.as_str()) {
            continue;
        }
        let s = matrix.require_source(name)?;
        let golds = gold.targets_of(name).ok_or_else(|| Error::Invalid(format!("training source `{name}` has no gold target")))?;
        let mut pool = Vec::with_capacity(matrix.targets().len());
        for (t, tname) in matrix.targets().iter().enumerate() {
            if golds.contains(tname) {
                out.push(matrix.instance(s, t, gold));
            } else {
                pool.push(t);
            }
        }
        let k = negatives_per_source.min(pool.len());
        // partial Fisher-Yates
        for i in 0..k {
            let j = rng.random_range(i..pool.len());
            pool.swap(i, j);
        }
        out.extend(pool[..k].iter().map(|&t| matrix.instance(s, t, gold)));
    }
    Ok(out)
}

/// Test pairs: each test source against the full target corpus.
pub fn generate_test_pairs(
    gold: &GoldPairs,
    test_sources: &[String],
    train_sources: &[String],
    matrix: &FeatureMatrix,
) -> Result<Vec<PairInstance>> {
    let train: HashSet<&str> = train_sources.iter().map(String::as_str).collect();
    if let Some(dup) = test_sources.iter().find(|s| train.contains(s.as_str())) {
        return Err(Error::SourceOverlap(dup.clone()));
    }
    let mut out = Vec::with_capacity(test_sources.len() * matrix.targets().len());
    let mut seen = HashSet::new();
    for name in test_sources {
        if !seen.insert(name.as_str()) {
            continue;
        }
        let s = matrix.require_source(name)?;
        out.extend((0..matrix.targets().len()).map(|t| matrix.instance(s, t, gold)));
    }
    Ok(out)
}

/// Writes pairs as CSV: names, the schema's feature columns, gold flag.
pub fn write_pairs_csv<W: Write>(writer: W, pairs: &[PairInstance], schema: &FeatureSchema) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["source_name".to_string(), "target_name".to_string()];
    header.extend(schema.names().iter().cloned());
    header.push("gold".into());
    w.write_record(&header)?;
    for p in pairs {
        if p.features.len() != schema.len() && p.features.len() != N_FEATURES {
            return Err(Error::SchemaMismatch { expected: schema.len(), actual: p.features.len() });
        }
        let values = if p.features.len() == schema.len() { p.features.clone() } else { schema.project(&p.features) };
        let mut rec = vec![p.source_name.clone(), p.target_name.clone()];
        rec.extend(values.iter().map(|v| v.to_string()));
        rec.push(u8::from(p.gold).to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<pairs csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::Side;
    use crate::embedding::{EmbedRequest, EmbedResponse, EmbeddingProvider, HashEmbedder};
    use crate::text::TermFrequencyExtractor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn record(name: &str, label: &str, sheet: &str, rule: &str, side: Side) -> VariableRecord {
        VariableRecord { name: name.into(), label: label.into(), sheet_desc: sheet.into(), derivation_rule: rule.into(), side }
    }

    fn unit2(c: f64) -> Arc<[f32]> {
        vec![c as f32, (1.0 - c * c).sqrt() as f32].into()
    }

    #[test]
    fn schema_shape() {
        let s = FeatureSchema::full();
        assert_eq!(s.len(), 18);
        assert_eq!(s.names()[0], "E5_on_label");
        assert_eq!(s.names()[17], "Derive_info_null_JP");
        let total: usize = FeatureGroup::ALL.iter().map(|g| g.columns().len()).sum();
        assert_eq!(total, 18);
        let no_llm = FeatureSchema::without(&[FeatureGroup::Llm]).unwrap();
        assert_eq!(no_llm.len(), 9);
        assert_eq!(no_llm.names()[0], "Fuzzy_on_label");
        assert_ne!(no_llm.fingerprint(), s.fingerprint());
        assert!(FeatureSchema::without(&FeatureGroup::ALL).is_err());
    }

    #[test]
    fn mocked_cosines_land_in_their_slots() {
        // Source embeddings sit on the x axis; target embeddings are rotated
        // so that their cosines with the source are the chosen values.
        let x: Arc<[f32]> = vec![1.0f32, 0.0].into();
        let src = PreparedVariable::new(
            record("DIAGDT", "Disease diagnosis date", "Diagnosis", &vec!["w"; 30].join(" "), Side::Source),
            MatchTexts { label_text: "Disease diagnosis date".into(), sheet_text: "Diagnosis".into(), label_key_text: "Disease diagnosis date".into() },
            [[x.clone(), x.clone(), x.clone()], [x.clone(), x.clone(), x.clone()], [x.clone(), x.clone(), x.clone()]],
        );
        let tgt = PreparedVariable::new(
            record("ADDIADT", "Diagnosis date", "Diagnosis", "", Side::Target),
            MatchTexts { label_text: "Diagnosis date".into(), sheet_text: "Diagnosis".into(), label_key_text: "Diagnosis date".into() },
            [[unit2(0.98), unit2(0.76), unit2(0.90)], [x.clone(), x.clone(), x.clone()], [x.clone(), x.clone(), x]],
        );
        let f = build_pair_features(&src, &tgt).unwrap();
        assert!((f[0] - 0.98).abs() < 1e-6);
        assert!((f[1] - 0.76).abs() < 1e-6);
        assert!((f[2] - 0.90).abs() < 1e-6);
        assert_eq!(f[12], 3.0);
        assert_eq!(f[14], 30.0);
        assert_eq!(f[16], 0.0);
        assert_eq!(f[15], 0.0);
        assert_eq!(f[17], 1.0);
    }

    fn client() -> EmbeddingClient {
        EmbeddingClient::new(Arc::new(HashEmbedder::new(64, 4)))
    }

    #[test]
    fn identical_texts_give_unit_similarities() {
        let rec_s = record("A", "Body mass index", "Vitals", "weight over height squared", Side::Source);
        let rec_t = record("B", "Body mass index", "Vitals", "weight over height squared", Side::Target);
        let s = DataDictionary::from_records(Side::Source, vec![rec_s], crate::dictionary::Provenance::in_memory()).unwrap();
        let t = DataDictionary::from_records(Side::Target, vec![rec_t], crate::dictionary::Provenance::in_memory()).unwrap();
        let ps = prepare_dictionary(&s, &TermFrequencyExtractor, &client()).unwrap();
        let pt = prepare_dictionary(&t, &TermFrequencyExtractor, &client()).unwrap();
        let f = build_pair_features(&ps[0], &pt[0]).unwrap();
        for v in &f[..12] {
            assert!((v - 1.0).abs() < 1e-9, "{f:?}");
        }
    }

    #[test]
    fn empty_rule_branch() {
        let src = record("S", "Sex", "Demog", "1=male 2=female", Side::Source);
        let tgt = record("T", "Sex", "Demog", "", Side::Target);
        let s = DataDictionary::from_records(Side::Source, vec![src], crate::dictionary::Provenance::in_memory()).unwrap();
        let t = DataDictionary::from_records(Side::Target, vec![tgt], crate::dictionary::Provenance::in_memory()).unwrap();
        let ps = prepare_dictionary(&s, &TermFrequencyExtractor, &client()).unwrap();
        let pt = prepare_dictionary(&t, &TermFrequencyExtractor, &client()).unwrap();
        assert_eq!(pt[0].texts.label_key_text, "Sex");
        let f = build_pair_features(&ps[0], &pt[0]).unwrap();
        assert_eq!(f[17], 1.0);
        assert_eq!(f[15], 0.0);
        let expect = token_set_ratio(&normalize_for_fuzzy("Sex, 1=male 2=female"), &normalize_for_fuzzy("Sex")).unit();
        assert_eq!(f[11], expect);
    }

    struct Broken;
    impl EmbeddingProvider for Broken {
        fn endpoint(&self) -> String {
            "http://sidecar:8000".into()
        }
        fn embed(&self, _: &EmbedRequest) -> Result<EmbedResponse> {
            Err(Error::ProviderUnavailable { endpoint: self.endpoint(), reason: "refused".into() })
        }
    }

    #[test]
    fn provider_errors_propagate() {
        let d = DataDictionary::from_records(
            Side::Source,
            vec![record("A", "x", "", "", Side::Source)],
            crate::dictionary::Provenance::in_memory(),
        )
        .unwrap();
        let c = EmbeddingClient::new(Arc::new(Broken));
        assert!(matches!(prepare_dictionary(&d, &TermFrequencyExtractor, &c), Err(Error::ProviderUnavailable { .. })));
    }

    fn synthetic_matrix(n_sources: usize, n_targets: usize) -> (FeatureMatrix, GoldPairs) {
        let sources: Vec<String> = (0..n_sources).map(|i| format!("S{i}")).collect();
        let targets: Vec<String> = (0..n_targets).map(|i| format!("T{i}")).collect();
        let gold = GoldPairs::new(sources.iter().enumerate().map(|(i, s)| (s.clone(), format!("T{i}"))));
        let m = FeatureMatrix::from_fn(sources, targets, |s, t| {
            let mut f = [0.0; N_FEATURES];
            f[0] = if s == t { 1.0 } else { 0.1 };
            f
        });
        (m, gold)
    }

    #[test]
    fn training_pairs_sampling() {
        let (m, gold) = synthetic_matrix(1, 1322);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pairs = generate_training_pairs(&gold, &["S0".into()], &m, 200, &mut rng).unwrap();
        assert_eq!(pairs.len(), 201);
        assert_eq!(pairs.iter().filter(|p| p.gold).count(), 1);
        assert!(pairs.iter().filter(|p| !p.gold).all(|p| p.target_name != "T0"));
        let distinct: HashSet<_> = pairs.iter().map(|p| &p.target_name).collect();
        assert_eq!(distinct.len(), 201);

        let again = generate_training_pairs(&gold, &["S0".into()], &m, 200, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(pairs, again);

        let (small, gold) = synthetic_matrix(1, 151);
        let capped = generate_training_pairs(&gold, &["S0".into()], &small, 200, &mut rng).unwrap();
        assert_eq!(capped.iter().filter(|p| !p.gold).count(), 150);

        assert!(matches!(
            generate_training_pairs(&gold, &["nope".into()], &small, 200, &mut rng),
            Err(Error::UnknownSource(_))
        ));
    }

    #[test]
    fn multi_target_negatives_exclude_all_gold() {
        let (m, _) = synthetic_matrix(1, 30);
        let gold = GoldPairs::new([("S0", "T0"), ("S0", "T5")]);
        let pairs = generate_training_pairs(&gold, &["S0".into()], &m, 100, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(pairs.iter().filter(|p| p.gold).count(), 2);
        assert_eq!(pairs.len(), 30);
        assert!(pairs.iter().filter(|p| !p.gold).all(|p| p.target_name != "T0" && p.target_name != "T5"));
    }

    #[test]
    fn test_pairs_cover_all_targets() {
        let (m, gold) = synthetic_matrix(70, 1322);
        let test: Vec<String> = m.sources().to_vec();
        let pairs = generate_test_pairs(&gold, &test, &[], &m).unwrap();
        assert_eq!(pairs.len(), 92_540);

        let (m, gold) = synthetic_matrix(1, 3);
        let pairs = generate_test_pairs(&gold, &["S0".into()], &[], &m).unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs.iter().filter(|p| p.gold).count(), 1);

        assert!(matches!(
            generate_test_pairs(&gold, &["S0".into()], &["S0".into()], &m),
            Err(Error::SourceOverlap(_))
        ));
    }

    #[test]
    fn gold_csv_round_trip_and_validation() {
        let gold = GoldPairs::parse_csv("source_var,target_var\nSEXLNM,ADSL_SEXCD\nSEXLNM,ADCOV_SEXCD\n".as_bytes()).unwrap();
        assert_eq!(gold.n_pairs(), 2);
        assert_eq!(gold.n_sources(), 1);
        let mut buf = Vec::new();
        gold.write_csv(&mut buf).unwrap();
        assert_eq!(GoldPairs::parse_csv(buf.as_slice()).unwrap(), gold);
        assert!(GoldPairs::parse_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn pairs_csv_has_schema_columns() {
        let (m, gold) = synthetic_matrix(1, 2);
        let pairs = generate_test_pairs(&gold, &["S0".into()], &[], &m).unwrap();
        let mut buf = Vec::new();
        write_pairs_csv(&mut buf, &pairs, &FeatureSchema::full()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header.split(',').count(), 21);
        assert!(header.starts_with("source_name,target_name,E5_on_label"));
        assert!(text.lines().nth(1).unwrap().ends_with(",1"));
    }
}
