//! Run configuration: TOML sections, `BASCONV_*` environment overrides and
//! a content hash embedded in every output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{ModelKind, DEFAULT_K};
use crate::graph::ColumnSpec;
use crate::synthetic::PlantedConfig;
use crate::trainer::TrainConfig;

/// Version tag written into every artifact.
pub const ARTIFACT_VERSION: &str = concat!("basconv/", env!("CARGO_PKG_VERSION"));

/// Prefix of environment variables overriding config keys.
pub const ENV_PREFIX: &str = "BASCONV_";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    /// One delimited file with user, basket and item columns.
    #[default]
    Csv,
    /// Directory holding the Instacart `orders.csv` and `order_products__*.csv` files.
    Instacart,
    /// Typed edge list as written by `export_edge_list`.
    EdgeList,
    /// Generated planted-intent data; `path` is ignored.
    Planted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    pub format: DataFormat,
    pub min_basket_size: usize,
    /// Keep only this many users, drawn at random; 0 keeps everyone.
    pub sample_users: usize,
    pub columns: ColumnSpec,
    pub planted: PlantedConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: PathBuf::from("data/transactions.csv"),
            format: DataFormat::Csv,
            min_basket_size: 30,
            sample_users: 0,
            columns: ColumnSpec::default(),
            planted: PlantedConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Share of each basket's items kept for training.
    pub train_fraction: f64,
    /// Share of each basket's training items masked for validation.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.8,
            validation_fraction: 0.2,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k: usize,
    pub model: ModelKind,
    pub fractions: Vec<f64>,
    pub layer_counts: Vec<usize>,
    pub sweep_models: Vec<ModelKind>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: DEFAULT_K,
            model: ModelKind::BasConv,
            fractions: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            layer_counts: vec![1, 2, 3, 4],
            sweep_models: ModelKind::ALL.to_vec(),
        }
    }
}

/// Settings that change where and how fast a run executes but not its results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub deterministic: bool,
    /// Write `ckpt-epoch{N}.bcv` every this many epochs; 0 writes only the best.
    pub checkpoint_every: usize,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            out_dir: PathBuf::from("runs/default"),
            threads: 0,
            deterministic: true,
            checkpoint_every: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub split: SplitConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub run: RuntimeConfig,
}

#[derive(Serialize)]
struct HashedFields<'a> {
    data: &'a DataConfig,
    split: &'a SplitConfig,
    train: &'a TrainConfig,
    eval: &'a EvalConfig,
    checkpoint_every: usize,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        let s = &self.split;
        if !(s.train_fraction > 0.0 && s.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "split.train_fraction must lie in (0, 1), got {}",
                s.train_fraction
            )));
        }
        if !(0.0..1.0).contains(&s.validation_fraction) {
            return Err(Error::Config(format!(
                "split.validation_fraction must lie in [0, 1), got {}",
                s.validation_fraction
            )));
        }
        if self.eval.k == 0 {
            return Err(Error::Config("eval.k must be at least 1".into()));
        }
        if let Some(f) = self
            .eval
            .fractions
            .iter()
            .find(|&&f| !(f > 0.0 && f <= 1.0))
        {
            return Err(Error::Config(format!(
                "sweep fraction {f} is outside (0, 1]"
            )));
        }
        if self.eval.layer_counts.contains(&0) {
            return Err(Error::Config("layer counts must be at least 1".into()));
        }
        for seed in [self.train.seed, self.split.seed, self.data.planted.seed] {
            if seed > i64::MAX as u64 {
                return Err(Error::Config(format!("seed {seed} exceeds {}", i64::MAX)));
            }
        }
        Ok(())
    }

    /// Sets both the training and the split seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.split.seed = seed;
    }

    /// SHA-256 over every setting that can change results; runtime placement
    /// (output directory, thread count, determinism flag) is left out.
    pub fn hash(&self) -> String {
        let fields = HashedFields {
            data: &self.data,
            split: &self.split,
            train: &self.train,
            eval: &self.eval,
            checkpoint_every: self.run.checkpoint_every,
        };
        let json = serde_json::to_vec(&fields).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    /// Applies `BASCONV_<SECTION>_<KEY>` variables from the process environment.
    pub fn apply_env(&mut self) -> Result<Vec<String>> {
        self.apply_overrides(std::env::vars())
    }

    /// Applies overrides from `(name, value)` pairs and returns the keys that
    /// were set. Nested tables join with underscores, so `train.model.dim` is
    /// `BASCONV_TRAIN_MODEL_DIM`. Values parse as TOML, falling back to a
    /// plain string.
    pub fn apply_overrides(
        &mut self,
        vars: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Vec<String>> {
        let mut root = toml::Value::try_from(&*self)
            .map_err(|e| Error::Config(format!("cannot serialize config: {e}")))?;
        let mut applied = Vec::new();
        let mut vars: Vec<(String, String)> = vars
            .into_iter()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX))
            .collect();
        vars.sort();
        for (name, raw) in vars {
            let key = name[ENV_PREFIX.len()..].to_ascii_lowercase();
            let Some(path) = resolve_key(&root, &key) else {
                log::debug!("ignoring {name}: no matching config key");
                continue;
            };
            set_path(&mut root, &path, parse_value(&raw));
            applied.push(path.join("."));
        }
        let updated: RunConfig = root
            .try_into()
            .map_err(|e| Error::Config(format!("invalid environment override: {e}")))?;
        updated.validate()?;
        *self = updated;
        Ok(applied)
    }
}

/// Splits an underscore-joined key into a path of existing table names
/// followed by one leaf key.
fn resolve_key(root: &toml::Value, key: &str) -> Option<Vec<String>> {
    let table = root.as_table()?;
    if let Some(v) = table.get(key) {
        return (!v.is_table()).then(|| vec![key.to_owned()]);
    }
    for (name, sub) in table {
        if let Some(rest) = key
            .strip_prefix(name.as_str())
            .and_then(|r| r.strip_prefix('_'))
        {
            if sub.is_table() {
                if let Some(mut tail) = resolve_key(sub, rest) {
                    tail.insert(0, name.clone());
                    return Some(tail);
                }
            }
        }
    }
    // Leaf keys absent from the serialized form (unset options) are accepted
    // at the innermost table named so far.
    (!key.is_empty() && !key.contains('_') && table.values().all(|v| !v.is_table()))
        .then(|| vec![key.to_owned()])
}

fn set_path(root: &mut toml::Value, path: &[String], value: toml::Value) {
    let mut cur = root;
    for part in &path[..path.len() - 1] {
        cur = cur
            .as_table_mut()
            .expect("resolved path walks tables")
            .get_mut(part)
            .expect("resolved path exists");
    }
    cur.as_table_mut()
        .expect("resolved path ends in a table")
        .insert(path[path.len() - 1].clone(), value);
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}
