//! Serialized outputs shared by the command line and the test suites.

use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, ARTIFACT_VERSION};
use crate::eval::{ModelKind, RankingMetrics};
use crate::trainer::EpochRecord;

/// Run identity stamped on every output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn of(config: &RunConfig) -> Self {
        Provenance {
            version: ARTIFACT_VERSION.to_owned(),
            config_hash: config.hash(),
            seed: config.train.seed,
        }
    }
}

/// Metrics of one model on the test split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: ModelKind,
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub hr: f64,
    pub n_baskets: usize,
    pub skipped_baskets: usize,
    #[serde(flatten)]
    pub provenance: Provenance,
}

impl MetricsReport {
    pub fn new(model: ModelKind, metrics: &RankingMetrics, provenance: Provenance) -> Self {
        MetricsReport {
            model,
            k: metrics.k,
            recall: metrics.recall_at_k,
            ndcg: metrics.ndcg_at_k,
            hr: metrics.hr_at_k,
            n_baskets: metrics.n_baskets,
            skipped_baskets: metrics.skipped_baskets,
            provenance,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Aligned table with one row per model and one column per metric.
pub fn metrics_table(reports: &[MetricsReport]) -> String {
    let k = reports.first().map_or(crate::eval::DEFAULT_K, |r| r.k);
    let name_w = reports
        .iter()
        .map(|r| r.model.name().len())
        .chain(["model".len()])
        .max()
        .unwrap_or(5);
    let cols = [
        format!("Recall@{k}"),
        format!("NDCG@{k}"),
        format!("HR@{k}"),
    ];
    let col_w = cols.iter().map(String::len).max().unwrap_or(8).max(6);
    let mut out = format!("{:<name_w$}", "model");
    for c in &cols {
        out.push_str(&format!("  {c:>col_w$}"));
    }
    out.push('\n');
    out.push_str(&"-".repeat(name_w + 3 * (col_w + 2)));
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{:<name_w$}  {:>col_w$.4}  {:>col_w$.4}  {:>col_w$.4}\n",
            r.model.name(),
            r.recall,
            r.ndcg,
            r.hr
        ));
    }
    out
}

#[derive(Serialize)]
struct LogLine<'a> {
    model: ModelKind,
    #[serde(flatten)]
    record: &'a EpochRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_s: Option<f64>,
    #[serde(flatten)]
    provenance: &'a Provenance,
}

/// One JSON line of the training log. Wall time is included only outside
/// deterministic mode.
pub fn log_line(
    model: ModelKind,
    record: &EpochRecord,
    provenance: &Provenance,
    deterministic: bool,
) -> String {
    let line = LogLine {
        model,
        record,
        wall_time_s: (!deterministic).then_some(record.wall_time_s),
        provenance,
    };
    serde_json::to_string(&line).expect("log line serializes")
}
