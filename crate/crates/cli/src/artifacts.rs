use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use basconv::graph::{GraphSummary, SplitResult};
use basconv::report::Provenance;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const GRAPH_FILE: &str = "graph.json";
pub const SPLIT_FILE: &str = "split.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.toml";

/// A JSON artifact stamped with the run that produced it.
#[derive(Serialize, Deserialize)]
pub struct Stamped<T> {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub payload: T,
}

#[derive(Serialize, Deserialize)]
pub struct PreparedSummary {
    pub fingerprint: String,
    pub min_basket_size: usize,
    pub graph: GraphSummary,
    pub test_baskets: usize,
    pub test_items: usize,
    pub validation_items: usize,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        bail!(
            "missing artifact {}; run `basconv prepare` with the same --out first",
            path.display()
        );
    }
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_split(out: &Path) -> Result<SplitResult> {
    let stamped: Stamped<SplitResult> = read_json(&out.join(SPLIT_FILE))?;
    Ok(stamped.payload)
}

/// Directory holding one model's checkpoints and training log.
pub fn model_dir(out: &Path, model: &str) -> PathBuf {
    out.join(model)
}
