use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use basconv::checkpoint::{Checkpoint, SavedModel};
use basconv::config::RunConfig;
use basconv::eval::{
    evaluate as evaluate_scorer, format_table, layer_sweep, sensitivity_sweep, train_bpr_mf_with,
    write_long_csv, BasConvScorer, BprMf, ItemPop, ModelKind, RankingMetrics, Scorer,
};
use basconv::graph::SplitResult;
use basconv::model::{cold_basket_embedding, concat_output, forward};
use basconv::report::{log_line, metrics_table, MetricsReport, Provenance};
use basconv::trainer::{train_with, EpochRecord, ResumeState, TrainObserver};
use basconv::{pipeline, Error};
use serde::Serialize;

use crate::artifacts::{
    load_split, model_dir, write_json, write_text, PreparedSummary, Stamped, CONFIG_FILE,
    GRAPH_FILE, SPLIT_FILE, SUMMARY_FILE,
};
use crate::SweepKind;

pub const TRAIN_LOG: &str = "train-log.jsonl";
pub const BEST_CHECKPOINT: &str = "ckpt-best.bcv";

fn stamped<T>(cfg: &RunConfig, payload: T) -> Stamped<T> {
    Stamped {
        provenance: Provenance::of(cfg),
        payload,
    }
}

fn out_dir(cfg: &RunConfig) -> &Path {
    &cfg.run.out_dir
}

pub fn prepare(cfg: &RunConfig) -> Result<()> {
    let (graph, split) = pipeline::prepare(cfg)?;
    let out = out_dir(cfg);
    let summary = PreparedSummary {
        fingerprint: graph.fingerprint(),
        min_basket_size: cfg.data.min_basket_size,
        graph: graph.summary(),
        test_baskets: split.heldout.len(),
        test_items: split.heldout.values().map(|s| s.len()).sum(),
        validation_items: split.masked_validation.values().map(|s| s.len()).sum(),
    };
    write_json(&out.join(GRAPH_FILE), &stamped(cfg, &graph))?;
    write_json(&out.join(SPLIT_FILE), &stamped(cfg, &split))?;
    write_json(&out.join(SUMMARY_FILE), &stamped(cfg, &summary))?;
    let mut text = format!(
        "# provenance: version {} config_hash {} seed {}\n",
        basconv::config::ARTIFACT_VERSION,
        cfg.hash(),
        cfg.train.seed
    );
    text.push_str(&cfg.to_toml_string()?);
    write_text(&out.join(CONFIG_FILE), &text)?;
    let s = &summary.graph;
    println!(
        "prepared {} users, {} baskets, {} items ({} train edges, {} test items) in {}",
        s.n_users,
        s.n_baskets,
        s.n_items,
        split.n_train_edges(),
        summary.test_items,
        out.display()
    );
    Ok(())
}

/// Appends one log line per epoch and writes checkpoints as training runs.
struct CheckpointWriter<'a, F> {
    kind: ModelKind,
    cfg: &'a RunConfig,
    split: &'a SplitResult,
    dir: PathBuf,
    log: BufWriter<File>,
    provenance: Provenance,
    wrap: F,
}

impl<P, F> TrainObserver<P> for CheckpointWriter<'_, F>
where
    P: Clone,
    F: Fn(P) -> SavedModel,
{
    fn on_epoch(
        &mut self,
        record: &EpochRecord,
        state: &ResumeState<P>,
        improved: bool,
    ) -> basconv::Result<()> {
        let line = log_line(
            self.kind,
            record,
            &self.provenance,
            self.cfg.run.deterministic,
        );
        let io = |e| Error::io(self.dir.join(TRAIN_LOG), e);
        writeln!(self.log, "{line}").map_err(io)?;
        self.log.flush().map_err(io)?;
        let ckpt = || {
            Checkpoint::new(
                (self.wrap)(state.params.clone()),
                &self.split.train_graph,
                &self.cfg.hash(),
                self.cfg.train.seed,
            )
            .with_state(state.epoch, state.best, state.adam.clone())
        };
        if improved {
            ckpt().save(&self.dir.join(BEST_CHECKPOINT))?;
        }
        let every = self.cfg.run.checkpoint_every;
        if every > 0 && record.epoch.is_multiple_of(every) {
            ckpt().save(&self.dir.join(format!("ckpt-epoch{}.bcv", record.epoch)))?;
        }
        Ok(())
    }
}

pub fn train(cfg: &RunConfig, resume: Option<&Path>) -> Result<()> {
    let kind = cfg.eval.model;
    let out = out_dir(cfg);
    let split = load_split(out)?;
    if kind == ModelKind::ItemPop {
        println!("item-pop has no parameters to train; run `basconv evaluate --model item-pop`");
        return Ok(());
    }
    let resumed = resume
        .map(|path| {
            Checkpoint::load_for(path, &split.train_graph)
                .with_context(|| format!("resuming from {}", path.display()))
        })
        .transpose()?;
    let dir = model_dir(out, kind.name());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let log_path = dir.join(TRAIN_LOG);
    let log = OpenOptions::new()
        .create(true)
        .write(true)
        .append(resumed.is_some())
        .truncate(resumed.is_none())
        .open(&log_path)
        .with_context(|| format!("opening {}", log_path.display()))?;
    let provenance = Provenance::of(cfg);
    let (epochs, best) = match kind {
        ModelKind::BasConv => {
            let start = resumed
                .as_ref()
                .map(Checkpoint::basconv_resume)
                .transpose()?;
            let mut writer = CheckpointWriter {
                kind,
                cfg,
                split: &split,
                dir: dir.clone(),
                log: BufWriter::new(log),
                provenance,
                wrap: SavedModel::BasConv,
            };
            let outcome = train_with(&split, &cfg.train, start, &mut writer)?;
            (outcome.last.epoch, outcome.best_epoch)
        }
        ModelKind::BprMf => {
            let start = resumed
                .as_ref()
                .map(Checkpoint::bpr_mf_resume)
                .transpose()?;
            let mut writer = CheckpointWriter {
                kind,
                cfg,
                split: &split,
                dir: dir.clone(),
                log: BufWriter::new(log),
                provenance,
                wrap: SavedModel::BprMf,
            };
            let outcome = train_bpr_mf_with(&split, &cfg.train, start, &mut writer)?;
            (outcome.last.epoch, outcome.best_epoch)
        }
        ModelKind::ItemPop => unreachable!("handled above"),
    };
    println!(
        "trained {kind} through epoch {epochs}; best epoch {}; checkpoints in {}",
        best.map_or("n/a".to_owned(), |e| e.to_string()),
        dir.display()
    );
    Ok(())
}

fn default_checkpoint(cfg: &RunConfig, kind: ModelKind) -> PathBuf {
    model_dir(out_dir(cfg), kind.name()).join(BEST_CHECKPOINT)
}

/// A trained scorer over the full training graph of `split`.
fn load_scorer(
    kind: ModelKind,
    split: &SplitResult,
    checkpoint: Option<&Path>,
    cfg: &RunConfig,
) -> Result<Box<dyn Scorer>> {
    if kind == ModelKind::ItemPop {
        return Ok(Box::new(ItemPop::fit(split)));
    }
    let path = checkpoint.map_or_else(|| default_checkpoint(cfg, kind), Path::to_path_buf);
    if !path.exists() {
        bail!(
            "missing checkpoint {}; run `basconv train --model {kind}` first",
            path.display()
        );
    }
    let ckpt = Checkpoint::load_for(&path, &split.train_graph)
        .with_context(|| format!("loading {}", path.display()))?;
    Ok(match ckpt.model {
        SavedModel::BasConv(p) if kind == ModelKind::BasConv => {
            Box::new(BasConvScorer::new(&split.train_graph, &p)?)
        }
        SavedModel::BprMf(p) if kind == ModelKind::BprMf => {
            Box::new(BprMf::new(p, split.train_graph.owners().to_vec()))
        }
        other => bail!(
            "{} holds a {} model but {kind} was requested",
            path.display(),
            other.name()
        ),
    })
}

pub fn evaluate(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<()> {
    let kind = cfg.eval.model;
    let out = out_dir(cfg);
    let split = load_split(out)?;
    let scorer = load_scorer(kind, &split, checkpoint, cfg)?;
    let metrics: RankingMetrics = evaluate_scorer(scorer.as_ref(), &split, cfg.eval.k)?;
    let report = MetricsReport::new(kind, &metrics, Provenance::of(cfg));
    write_text(&out.join(format!("metrics-{kind}.json")), &report.to_json())?;
    print!("{}", metrics_table(&[report]));
    Ok(())
}

#[derive(Serialize)]
struct Recommendation {
    rank: usize,
    item: String,
    score: f64,
    user_term: f64,
    basket_term: f64,
}

#[derive(Serialize)]
struct RecommendOutput<'a> {
    model: ModelKind,
    user: &'a str,
    basket: &'a [String],
    recommendations: Vec<Recommendation>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn recommend(
    cfg: &RunConfig,
    user_id: &str,
    item_ids: &[String],
    checkpoint: Option<&Path>,
    k: usize,
    json: bool,
) -> Result<()> {
    let split = load_split(out_dir(cfg))?;
    let graph = &split.train_graph;
    let item_ids: Vec<String> = item_ids
        .iter()
        .map(|s| s.trim().to_owned())
        .filter(|s| !s.is_empty())
        .collect();
    let user = graph.users().index(user_id);
    let items: Vec<Option<usize>> = item_ids.iter().map(|id| graph.items().index(id)).collect();
    let mut unknown = Vec::new();
    if user.is_none() {
        unknown.push(format!("user `{user_id}`"));
    }
    for (id, idx) in item_ids.iter().zip(&items) {
        if idx.is_none() {
            unknown.push(format!("item `{id}`"));
        }
    }
    if !unknown.is_empty() {
        bail!("unknown ids: {}", unknown.join(", "));
    }
    let user = user.expect("checked above");
    let mut basket: Vec<usize> = items.into_iter().flatten().collect();
    basket.sort_unstable();
    basket.dedup();

    let kind = cfg.eval.model;
    let n_items = graph.n_items();
    let mut user_terms = vec![0.0; n_items];
    let mut basket_terms = vec![0.0; n_items];
    if kind == ModelKind::ItemPop {
        ItemPop::from_graph(graph).score_user(user, &mut user_terms);
    } else {
        let path = checkpoint.map_or_else(|| default_checkpoint(cfg, kind), Path::to_path_buf);
        let ckpt = Checkpoint::load_for(&path, graph)
            .with_context(|| format!("loading {}", path.display()))?;
        match ckpt.model {
            SavedModel::BasConv(params) => {
                let layers = forward(graph, &params)?;
                let out = concat_output(&layers);
                let cold = cold_basket_embedding(&layers, &params, user, &basket)?;
                let u = out.users.row(user);
                for i in 0..n_items {
                    let e_i = out.items.row(i);
                    user_terms[i] = dot(u, e_i);
                    if !basket.is_empty() {
                        basket_terms[i] = dot(&cold, e_i);
                    }
                }
            }
            SavedModel::BprMf(params) => {
                let u = params.user_emb.row(user);
                for (i, t) in user_terms.iter_mut().enumerate() {
                    *t = dot(u, params.item_emb.row(i));
                }
            }
        }
    }
    let scores: Vec<f64> = user_terms
        .iter()
        .zip(&basket_terms)
        .map(|(u, b)| u + b)
        .collect();
    let ranked = basconv::eval::top_k(&scores, &basket, k);
    let recommendations: Vec<Recommendation> = ranked
        .iter()
        .enumerate()
        .map(|(r, &i)| Recommendation {
            rank: r + 1,
            item: graph.items().id(i).to_owned(),
            score: scores[i],
            user_term: user_terms[i],
            basket_term: basket_terms[i],
        })
        .collect();
    if json {
        let payload = RecommendOutput {
            model: kind,
            user: user_id,
            basket: &item_ids,
            recommendations,
        };
        println!("{}", serde_json::to_string_pretty(&stamped(cfg, payload))?);
    } else {
        println!(
            "{:>4}  {:<24} {:>12} {:>12} {:>12}",
            "rank", "item", "score", "user·item", "basket·item"
        );
        for r in &recommendations {
            println!(
                "{:>4}  {:<24} {:>12.6} {:>12.6} {:>12.6}",
                r.rank, r.item, r.score, r.user_term, r.basket_term
            );
        }
    }
    Ok(())
}

fn parse_values<T: std::str::FromStr>(values: &[String], what: &str) -> Result<Vec<T>> {
    values
        .iter()
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| anyhow::anyhow!("invalid {what} `{v}`"))
        })
        .collect()
}

pub fn sweep(cfg: &RunConfig, kind: SweepKind, values: &[String]) -> Result<()> {
    let out = out_dir(cfg);
    let split = load_split(out)?;
    let (name, rows) = match kind {
        SweepKind::Fraction => {
            let fractions = if values.is_empty() {
                cfg.eval.fractions.clone()
            } else {
                parse_values::<f64>(values, "fraction")?
            };
            let rows = sensitivity_sweep(
                &split,
                &fractions,
                &cfg.eval.sweep_models,
                &cfg.train,
                cfg.eval.k,
            )?;
            ("fraction", rows)
        }
        SweepKind::Layers => {
            let counts = if values.is_empty() {
                cfg.eval.layer_counts.clone()
            } else {
                parse_values::<usize>(values, "layer count")?
            };
            (
                "layers",
                layer_sweep(&split, &counts, &cfg.train, cfg.eval.k)?,
            )
        }
    };
    write_json(
        &out.join(format!("sweep-{name}.json")),
        &stamped(cfg, &rows),
    )?;
    write_long_csv(&rows, &out.join(format!("sweep-{name}.csv")))?;
    print!("{}", format_table(&rows));
    Ok(())
}
