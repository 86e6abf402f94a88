//! BPR training with manual backpropagation and Adam.

mod adam;
mod backward;
mod sampler;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate, BasConvScorer, RankingMetrics};
use crate::graph::SplitResult;
use crate::kernels::RngStream;
use crate::model::{ModelConfig, ModelParams, Propagation};

pub use adam::{adam_step, AdamConfig, AdamState, Parameters};
pub use backward::{backward, batch_loss, bpr_loss, Gradients};
pub use sampler::{sample_triplets, Triplet, TripletSampler};

/// Learning rates considered during model selection.
pub const LEARNING_RATE_GRID: [f64; 6] = [1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3];

const INIT_STREAM: u64 = 0;
const EPOCH_STREAM_BASE: u64 = 1 << 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub learning_rate: f64,
    pub lambda: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub seed: u64,
    /// Cutoff for validation Recall@K.
    pub k: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            learning_rate: 5e-4,
            lambda: 1e-5,
            batch_size: 1024,
            epochs: 100,
            patience: 10,
            seed: 42,
            k: crate::eval::DEFAULT_K,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.model.dim == 0 {
            return bad("dim must be at least 1".into());
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || a.epsilon <= 0.0 {
            return bad("adam needs beta1, beta2 in [0, 1) and epsilon > 0".into());
        }
        if !LEARNING_RATE_GRID
            .iter()
            .any(|&g| (g - self.learning_rate).abs() <= 1e-12 * g)
        {
            log::warn!(
                "learning rate {} is outside the usual grid {:?}",
                self.learning_rate,
                LEARNING_RATE_GRID
            );
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Adam step counter after the epoch.
    pub step: u64,
    /// Mean per-triplet loss over the epoch's batches, regularizer included.
    pub mean_loss: f64,
    pub validation: Option<RankingMetrics>,
    pub best_epoch: Option<usize>,
    /// Excluded from serialized logs so reruns stay byte-identical.
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// Model, optimizer and epoch counter to continue training from.
#[derive(Clone, Debug)]
pub struct ResumeState<P> {
    pub params: P,
    pub adam: AdamState,
    pub epoch: usize,
    /// Best validation epoch so far and its Recall@K.
    pub best: Option<(usize, f64)>,
}

impl<P> ResumeState<P> {
    pub fn fresh(params: P, adam: AdamState) -> Self {
        ResumeState {
            params,
            adam,
            epoch: 0,
            best: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<P> {
    /// Parameters of the best validation epoch, or the last epoch without validation.
    pub params: P,
    pub last: ResumeState<P>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

/// Callback invoked after every epoch.
pub trait TrainObserver<P> {
    fn on_epoch(
        &mut self,
        record: &EpochRecord,
        state: &ResumeState<P>,
        improved: bool,
    ) -> Result<()>;
}

impl<P> TrainObserver<P> for () {
    fn on_epoch(&mut self, _: &EpochRecord, _: &ResumeState<P>, _: bool) -> Result<()> {
        Ok(())
    }
}

/// A model trainable with the BPR loop.
pub trait BprTask {
    type Params: Parameters + Clone;

    /// Positive edges per epoch.
    fn n_train_edges(&self) -> usize;

    /// Samples a batch and returns its loss and gradients.
    fn batch(
        &self,
        params: &Self::Params,
        batch_size: usize,
        lambda: f64,
        rng: &mut RngStream,
    ) -> Result<(f64, Self::Params)>;

    /// Validation metrics, if a validation set exists.
    fn validate(&self, params: &Self::Params, k: usize) -> Result<Option<RankingMetrics>>;
}

/// Runs `config.epochs` epochs of BPR training starting from `start`.
pub fn fit_loop<T: BprTask>(
    task: &T,
    start: ResumeState<T::Params>,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver<T::Params>,
) -> Result<TrainOutcome<T::Params>> {
    config.validate()?;
    let mut state = start;
    let steps = task.n_train_edges().div_ceil(config.batch_size).max(1);
    let mut history = Vec::with_capacity(config.epochs);
    // A resumed run starts from its last parameters, standing in for the
    // earlier best until an epoch improves on the recorded score.
    let mut best: Option<(f64, usize, T::Params)> = state
        .best
        .map(|(epoch, score)| (score, epoch, state.params.clone()));
    let mut stopped_early = false;
    let first = state.epoch + 1;
    for epoch in first..first + config.epochs {
        let timer = Instant::now();
        let mut rng = RngStream::new(config.seed).fork(EPOCH_STREAM_BASE + epoch as u64);
        let mut total = 0.0;
        for _ in 0..steps {
            let step = state.adam.step + 1;
            let (loss, grads) = task
                .batch(&state.params, config.batch_size, config.lambda, &mut rng)
                .map_err(|e| match e {
                    Error::NonFiniteGradient { param, .. } => {
                        Error::NonFiniteGradient { param, step }
                    }
                    other => other,
                })?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step, loss });
            }
            adam_step(
                &mut state.params,
                &grads,
                &mut state.adam,
                config.learning_rate,
                &config.adam,
            )?;
            total += loss / config.batch_size as f64;
        }
        state.epoch = epoch;
        let validation = task.validate(&state.params, config.k)?;
        let improved = match (&validation, &best) {
            (None, _) | (Some(_), None) => true,
            (Some(m), Some((b, _, _))) => m.recall_at_k > *b,
        };
        if improved {
            let score = validation.map_or(f64::NEG_INFINITY, |m| m.recall_at_k);
            best = Some((score, epoch, state.params.clone()));
            state.best = validation.map(|m| (epoch, m.recall_at_k));
        }
        let best_epoch = best.as_ref().map(|b| b.1);
        let record = EpochRecord {
            epoch,
            step: state.adam.step,
            mean_loss: total / steps as f64,
            validation,
            best_epoch,
            wall_time_s: timer.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.6}{} ({:.2}s)",
            record.mean_loss,
            validation.map_or(String::new(), |m| format!(
                ", val recall@{} {:.4}",
                m.k, m.recall_at_k
            )),
            record.wall_time_s
        );
        observer.on_epoch(&record, &state, improved)?;
        history.push(record);
        if config.patience > 0 && validation.is_some() {
            if let Some(b) = best_epoch {
                if epoch - b >= config.patience {
                    log::info!(
                        "no validation improvement for {} epochs, stopping",
                        config.patience
                    );
                    stopped_early = true;
                    break;
                }
            }
        }
    }
    let (params, best_epoch) = match best {
        Some((_, e, p)) => (p, Some(e)),
        None => (state.params.clone(), None),
    };
    Ok(TrainOutcome {
        params,
        last: state,
        history,
        best_epoch,
        stopped_early,
    })
}

/// BasConv on a split: fits on training minus the validation mask, with
/// negatives avoiding every known item of the basket.
pub struct BasConvTask {
    prop: Propagation,
    sampler: TripletSampler,
    n_edges: usize,
    validation: Option<SplitResult>,
}

impl BasConvTask {
    pub fn new(split: &SplitResult) -> Result<Self> {
        let fit = split.fit_graph();
        let sampler = TripletSampler::new(&fit, &[&split.heldout, &split.masked_validation])?;
        let has_validation = split.masked_validation.values().any(|s| !s.is_empty());
        Ok(BasConvTask {
            prop: Propagation::new(&fit),
            sampler,
            n_edges: fit.n_bi_edges(),
            validation: has_validation.then(|| split.validation_view()),
        })
    }

    pub fn propagation(&self) -> &Propagation {
        &self.prop
    }

    pub fn init_params(&self, config: &TrainConfig) -> ModelParams {
        let mut rng = RngStream::new(config.seed).fork(INIT_STREAM);
        ModelParams::init(
            self.prop.n_users(),
            self.prop.n_items(),
            &config.model,
            &mut rng,
        )
    }
}

impl BprTask for BasConvTask {
    type Params = ModelParams;

    fn n_train_edges(&self) -> usize {
        self.n_edges
    }

    fn batch(
        &self,
        params: &ModelParams,
        batch_size: usize,
        lambda: f64,
        rng: &mut RngStream,
    ) -> Result<(f64, ModelParams)> {
        let triplets = self.sampler.sample(batch_size, rng);
        let g = backward(&self.prop, params, &triplets, lambda)?;
        Ok((g.loss, g.grads))
    }

    fn validate(&self, params: &ModelParams, k: usize) -> Result<Option<RankingMetrics>> {
        let Some(view) = &self.validation else {
            return Ok(None);
        };
        let scorer = BasConvScorer::from_propagation(&self.prop, params)?;
        evaluate(&scorer, view, k).map(Some)
    }
}

/// Trains BasConv from a fresh Xavier initialization.
pub fn train(split: &SplitResult, config: &TrainConfig) -> Result<TrainOutcome<ModelParams>> {
    train_with(split, config, None, &mut ())
}

/// Trains BasConv, optionally resuming and reporting each epoch.
pub fn train_with(
    split: &SplitResult,
    config: &TrainConfig,
    resume: Option<ResumeState<ModelParams>>,
    observer: &mut dyn TrainObserver<ModelParams>,
) -> Result<TrainOutcome<ModelParams>> {
    config.validate()?;
    let task = BasConvTask::new(split)?;
    let start = match resume {
        Some(r) => {
            r.params.check(task.prop.n_users(), task.prop.n_items())?;
            r
        }
        None => {
            let params = task.init_params(config);
            let adam = AdamState::new(&params);
            ResumeState::fresh(params, adam)
        }
    };
    fit_loop(&task, start, config, observer)
}
