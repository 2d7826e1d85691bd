//! Binary Random Forest classifier.
//!
//! Each tree is grown on a subsample drawn *without* replacement and draws a
//! fresh random feature subset at every node. The predicted probability is
//! the mean over trees of the positive fraction at the reached leaf.

mod grid;
mod tree;

use std::borrow::Cow;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use grid::{grid_search_cv, CvOutcome};
pub use tree::{best_split, impurity, Samples, Split, Tree, TreeNode, MIN_IMPURITY_DECREASE};

use crate::error::{Error, Result};
use crate::features::{FeatureSchema, PairInstance, N_FEATURES};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gini,
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    Sqrt,
    Log2,
    All,
}

impl MaxFeatures {
    /// Number of features drawn per node out of `d`.
    pub fn count(self, d: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (d as f64).sqrt().floor() as usize,
            MaxFeatures::Log2 => (d as f64).log2().floor() as usize,
            MaxFeatures::All => d,
        };
        k.clamp(1, d.max(1))
    }
}

fn default_subsample() -> f64 {
    0.8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until the other stopping rules apply.
    pub max_depth: Option<usize>,
    pub criterion: Criterion,
    pub min_samples_split: usize,
    pub max_features: MaxFeatures,
    #[serde(default = "default_subsample")]
    pub subsample_fraction: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            criterion: Criterion::Gini,
            min_samples_split: 2,
            max_features: MaxFeatures::Sqrt,
            subsample_fraction: default_subsample(),
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidParams("n_trees must be positive".into()));
        }
        if self.max_depth == Some(0) {
            return Err(Error::InvalidParams("max_depth must be positive".into()));
        }
        if self.min_samples_split < 2 {
            return Err(Error::InvalidParams("min_samples_split must be at least 2".into()));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::InvalidParams("subsample_fraction must be in (0, 1]".into()));
        }
        Ok(())
    }

    /// One tree on all data with every feature considered at every node.
    pub fn deterministic_single_tree() -> Self {
        ForestParams { n_trees: 1, max_features: MaxFeatures::All, subsample_fraction: 1.0, ..Default::default() }
    }

    /// The default tuning grid: trees {100, 300} × depth {unbounded, 10, 20}
    /// × {gini, entropy} × min split {2, 5, 10} × features {sqrt, log2}.
    pub fn default_grid() -> Vec<ForestParams> {
        let mut grid = Vec::new();
        for n_trees in [100, 300] {
            for max_depth in [None, Some(10), Some(20)] {
                for criterion in [Criterion::Gini, Criterion::Entropy] {
                    for min_samples_split in [2, 5, 10] {
                        for max_features in [MaxFeatures::Sqrt, MaxFeatures::Log2] {
                            grid.push(ForestParams {
                                n_trees,
                                max_depth,
                                criterion,
                                min_samples_split,
                                max_features,
                                subsample_fraction: default_subsample(),
                            });
                        }
                    }
                }
            }
        }
        grid
    }

    pub fn read_grid(path: &Path) -> Result<Vec<ForestParams>> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let grid: Vec<ForestParams> = serde_json::from_str(&raw)?;
        for p in &grid {
            p.validate()?;
        }
        Ok(grid)
    }
}

/// Accepts either a full 18-feature vector or one already in schema order.
fn schema_view<'a>(schema: &FeatureSchema, features: &'a [f64]) -> Result<Cow<'a, [f64]>> {
    if features.len() == schema.len() {
        Ok(Cow::Borrowed(features))
    } else if features.len() == N_FEATURES {
        Ok(Cow::Owned(schema.project(features)))
    } else {
        Err(Error::SchemaMismatch { expected: schema.len(), actual: features.len() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub params: ForestParams,
    pub schema: FeatureSchema,
    pub seed: u64,
}

const MODEL_FORMAT: &str = "harmony-forest";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile<'a> {
    format: Cow<'a, str>,
    version: u32,
    schema_fingerprint: String,
    model: Cow<'a, ForestModel>,
}

/// Trains a forest. Instances may carry full 18-feature vectors (projected
/// onto `schema`) or vectors already in schema order.
pub fn train_forest(data: &[PairInstance], schema: &FeatureSchema, params: &ForestParams, seed: u64) -> Result<ForestModel> {
    params.validate()?;
    let d = schema.len();
    let mut x = Vec::with_capacity(data.len() * d);
    let mut y = Vec::with_capacity(data.len());
    for inst in data {
        x.extend_from_slice(&schema_view(schema, &inst.features)?);
        y.push(inst.gold);
    }
    if !(y.iter().any(|&g| g) && y.iter().any(|&g| !g)) {
        return Err(Error::SingleClassData);
    }
    if data.len() < params.min_samples_split {
        return Err(Error::InvalidParams(format!(
            "{} instances is fewer than min_samples_split {}",
            data.len(),
            params.min_samples_split
        )));
    }
    let samples = Samples { x: &x, y: &y, n_features: d };
    let n = data.len();
    let take = ((params.subsample_fraction * n as f64).ceil() as usize).clamp(1, n);

    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(seed, &[rng::FOREST, t as u64]);
            let mut rows: Vec<usize> = (0..n).collect();
            if take < n {
                for i in 0..take {
                    let j = rand::Rng::random_range(&mut rng, i..n);
                    rows.swap(i, j);
                }
                rows.truncate(take);
            }
            tree::TreeBuilder::new(&samples, params, &mut rng).build(&mut rows)
        })
        .collect();

    Ok(ForestModel { trees, params: *params, schema: schema.clone(), seed })
}

impl ForestModel {
    /// Mean positive leaf fraction over trees.
    pub fn predict_proba(&self, features: &[f64]) -> Result<f64> {
        let v = schema_view(&self.schema, features)?;
        Ok(self.trees.iter().map(|t| t.predict(&v)).sum::<f64>() / self.trees.len() as f64)
    }

    pub fn predict(&self, features: &[f64]) -> Result<bool> {
        Ok(self.predict_proba(features)? >= 0.5)
    }

    pub fn predict_many(&self, rows: &[PairInstance]) -> Result<Vec<f64>> {
        rows.par_iter().map(|r| self.predict_proba(&r.features)).collect()
    }

    /// Schema columns that some tree splits on.
    pub fn used_features(&self) -> std::collections::BTreeSet<usize> {
        self.trees.iter().flat_map(|t| t.split_features()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            schema_fingerprint: self.schema.fingerprint(),
            model: Cow::Borrowed(self),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        let file: ModelFile<'static> = serde_json::from_str(raw)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Invalid(format!("unsupported model format {} v{}", file.format, file.version)));
        }
        let model = file.model.into_owned();
        if model.schema.fingerprint() != file.schema_fingerprint {
            return Err(Error::Invalid("model schema fingerprint does not match".into()));
        }
        if model.trees.len() != model.params.n_trees {
            return Err(Error::Invalid("tree count does not match params".into()));
        }
        Ok(model)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_json()?.as_bytes()).map_err(|e| Error::io("<model>", e))
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut raw = String::new();
        r.read_to_string(&mut raw).map_err(|e| Error::io("<model>", e))?;
        Self::from_json(&raw)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&raw)
    }

    /// Content hash of the serialized model.
    pub fn content_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }
}
