//! Self-describing JSON checkpoints for trained models.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::MfParams;
use crate::graph::UbiGraph;
use crate::model::ModelParams;
use crate::trainer::{AdamState, ResumeState};

pub const FORMAT: &str = "basconv-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum SavedModel {
    #[serde(rename = "basconv")]
    BasConv(ModelParams),
    BprMf(MfParams),
}

impl SavedModel {
    pub fn name(&self) -> &'static str {
        match self {
            SavedModel::BasConv(_) => "basconv",
            SavedModel::BprMf(_) => "bpr-mf",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub layers: usize,
    /// Fingerprint of the id tables of the graph the model was trained on.
    pub fingerprint: String,
    pub config_hash: String,
    pub seed: u64,
    pub epoch: usize,
    pub best: Option<(usize, f64)>,
    pub model: SavedModel,
    pub adam: Option<AdamState>,
}

impl Checkpoint {
    pub fn new(model: SavedModel, graph: &UbiGraph, config_hash: &str, seed: u64) -> Self {
        let (dim, layers) = match &model {
            SavedModel::BasConv(p) => (p.dim(), p.n_layers()),
            SavedModel::BprMf(p) => (p.dim(), 0),
        };
        Checkpoint {
            format: FORMAT.to_owned(),
            version: VERSION,
            dim,
            layers,
            fingerprint: graph.fingerprint(),
            config_hash: config_hash.to_owned(),
            seed,
            epoch: 0,
            best: None,
            model,
            adam: None,
        }
    }

    /// Attaches optimizer state so training can resume from this checkpoint.
    pub fn with_state(mut self, epoch: usize, best: Option<(usize, f64)>, adam: AdamState) -> Self {
        self.epoch = epoch;
        self.best = best;
        self.adam = Some(adam);
        self
    }

    /// Writes atomically through a temporary sibling file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("bcv.tmp");
        let json = serde_json::to_vec(self)?;
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&json).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_slice(&bytes)?;
        if ckpt.format != FORMAT {
            return Err(Error::Invalid(format!(
                "{} is not a checkpoint (format `{}`)",
                path.display(),
                ckpt.format
            )));
        }
        if ckpt.version > VERSION {
            return Err(Error::Invalid(format!(
                "checkpoint version {} is newer than supported version {VERSION}",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }

    /// Loads and checks that the checkpoint belongs to `graph`.
    pub fn load_for(path: &Path, graph: &UbiGraph) -> Result<Self> {
        let ckpt = Self::load(path)?;
        ckpt.check_graph(graph)?;
        Ok(ckpt)
    }

    pub fn check_graph(&self, graph: &UbiGraph) -> Result<()> {
        let found = graph.fingerprint();
        if found != self.fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: self.fingerprint.clone(),
                found,
            });
        }
        match &self.model {
            SavedModel::BasConv(p) => p.check(graph.n_users(), graph.n_items()),
            SavedModel::BprMf(p) => {
                if p.user_emb.rows() != graph.n_users() || p.item_emb.rows() != graph.n_items() {
                    return Err(Error::Invalid(
                        "factor shapes do not match the graph".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Optimizer state for continuing BasConv training.
    pub fn basconv_resume(&self) -> Result<ResumeState<ModelParams>> {
        match &self.model {
            SavedModel::BasConv(p) => Ok(self.resume_with(p.clone())?),
            other => Err(Error::Invalid(format!(
                "checkpoint holds a {} model, not basconv",
                other.name()
            ))),
        }
    }

    pub fn bpr_mf_resume(&self) -> Result<ResumeState<MfParams>> {
        match &self.model {
            SavedModel::BprMf(p) => Ok(self.resume_with(p.clone())?),
            other => Err(Error::Invalid(format!(
                "checkpoint holds a {} model, not bpr-mf",
                other.name()
            ))),
        }
    }

    fn resume_with<P>(&self, params: P) -> Result<ResumeState<P>> {
        let adam = self
            .adam
            .clone()
            .ok_or_else(|| Error::Invalid("checkpoint has no optimizer state".into()))?;
        Ok(ResumeState {
            params,
            adam,
            epoch: self.epoch,
            best: self.best,
        })
    }
}
