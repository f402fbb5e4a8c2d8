//! Detection and scoring: per-session anomaly probabilities from a trained
//! network, precision/recall/F1 with explicit zero-division conventions, and
//! the plain-text report format. The experiment harnesses (paired ablation,
//! sensitivity sweeps, latency measurement) live in [`harness`].

pub mod harness;

pub use harness::{
    measure_inference, run_ablation, run_pipeline, run_sweep, sweep_tsv, AblationOutcome,
    LatencyStats, RunOutcome, RunSpec, SweepAxis,
};

use std::fmt::Write as _;

use crate::data::EvalGold;
use crate::embed::{oov_vector, EmbeddingConfig, EventEmbedding, OovPolicy};
use crate::error::{Error, Result};
use crate::net::{NetworkParams, Seq};
use crate::parser::Session;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    /// `fn` is taken by the language.
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub threshold: f64,
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// P = tp/(tp+fp), R = tp/(tp+fn), F1 = 2PR/(P+R); each is 0 where its
/// denominator is 0.
pub fn metrics_from_counts(counts: ConfusionCounts, threshold: f64) -> MetricsReport {
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    let recall = ratio(counts.tp, counts.tp + counts.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    MetricsReport { threshold, counts, precision, recall, f1 }
}

pub fn compute_metrics(predicted: &[bool], gold: &[bool], threshold: f64) -> Result<MetricsReport> {
    if predicted.len() != gold.len() {
        return Err(Error::Input(format!(
            "{} predictions against {} gold labels",
            predicted.len(),
            gold.len()
        )));
    }
    let mut counts = ConfusionCounts::default();
    for (&p, &g) in predicted.iter().zip(gold) {
        match (p, g) {
            (true, true) => counts.tp += 1,
            (true, false) => counts.fp += 1,
            (false, true) => counts.fn_ += 1,
            (false, false) => counts.tn += 1,
        }
    }
    Ok(metrics_from_counts(counts, threshold))
}

/// One scored session.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub key: String,
    pub probability: f64,
    pub anomalous: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DetectStats {
    /// Events whose template had no embedding entry and fell back to the
    /// OOV policy.
    pub oov_events: usize,
}

/// Turns one session's template ids into input vectors. Ids missing from the
/// table resolve through the OOV policy (hash of the lookup key, or zeros)
/// and are counted, never fatal: detection must accept sessions containing
/// templates never seen at embedding time.
pub fn embed_session(
    event_ids: &[u32],
    system: &str,
    embeddings: &EventEmbedding,
    config: &EmbeddingConfig,
) -> (Seq, usize) {
    let dim = embeddings.dimension();
    let mut oov = 0;
    let seq = event_ids
        .iter()
        .map(|&tid| match embeddings.get(system, tid) {
            Some(v) => v.to_vec(),
            None => {
                oov += 1;
                match config.oov_policy {
                    OovPolicy::Zero => vec![0.0; dim],
                    OovPolicy::SeededHash => {
                        oov_vector(&EventEmbedding::key(system, tid), dim, config.hash_seed)
                    }
                }
            }
        })
        .collect();
    (seq, oov)
}

/// Scores every session: probability from the anomaly head, label by
/// `probability >= threshold`.
pub fn detect(
    sessions: &[Session],
    system: &str,
    embeddings: &EventEmbedding,
    config: &EmbeddingConfig,
    params: &NetworkParams,
    threshold: f64,
) -> Result<(Vec<Detection>, DetectStats)> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("threshold {threshold} not in [0, 1]")));
    }
    if embeddings.dimension() != params.config.input_dim {
        return Err(Error::Config(format!(
            "embedding dimension {} does not match network input {}",
            embeddings.dimension(),
            params.config.input_dim
        )));
    }
    let mut stats = DetectStats::default();
    let detections = sessions
        .iter()
        .map(|s| {
            let (seq, oov) = embed_session(&s.event_ids, system, embeddings, config);
            stats.oov_events += oov;
            let probability = params.classify_anomaly(&seq);
            Detection { key: s.key.clone(), probability, anomalous: probability >= threshold }
        })
        .collect();
    Ok((detections, stats))
}

/// Confronts detections with gold labels through the counted interface.
/// Every detection key must have a gold entry.
pub fn score_against_gold(
    detections: &[Detection],
    gold: &EvalGold,
    threshold: f64,
) -> Result<MetricsReport> {
    let mut counts = ConfusionCounts::default();
    for d in detections {
        let anomalous = gold
            .lookup(&d.key)
            .ok_or_else(|| Error::Input(format!("no gold label for session {:?}", d.key)))?;
        match (d.anomalous, anomalous) {
            (true, true) => counts.tp += 1,
            (true, false) => counts.fp += 1,
            (false, true) => counts.fn_ += 1,
            (false, false) => counts.tn += 1,
        }
    }
    Ok(metrics_from_counts(counts, threshold))
}

/// Report text: fixed key order, metrics at 6 decimal places. The format is
/// the external interface; `parse_report` reads it back.
pub fn render_report(report: &MetricsReport, checkpoint_id: &str) -> String {
    let mut out = String::new();
    let c = report.counts;
    writeln!(out, "zerolog report").unwrap();
    writeln!(out, "checkpoint: {checkpoint_id}").unwrap();
    writeln!(out, "threshold: {:.6}", report.threshold).unwrap();
    writeln!(out, "sessions: {}", c.total()).unwrap();
    writeln!(out, "tp: {}", c.tp).unwrap();
    writeln!(out, "fp: {}", c.fp).unwrap();
    writeln!(out, "fn: {}", c.fn_).unwrap();
    writeln!(out, "tn: {}", c.tn).unwrap();
    writeln!(out, "precision: {:.6}", report.precision).unwrap();
    writeln!(out, "recall: {:.6}", report.recall).unwrap();
    writeln!(out, "f1: {:.6}", report.f1).unwrap();
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReport {
    pub checkpoint_id: String,
    pub report: MetricsReport,
}

/// Reads a report back. Metrics are taken as printed (they may carry
/// rounding from their producer), only structure is validated.
pub fn parse_report(text: &str) -> Result<ParsedReport> {
    let mut lines = text.lines();
    if lines.next() != Some("zerolog report") {
        return Err(Error::Input("not a report: missing header line".into()));
    }
    let mut checkpoint_id = None;
    let mut fields: std::collections::BTreeMap<&str, &str> = Default::default();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once(": ")
            .ok_or_else(|| Error::Input(format!("bad report line {line:?}")))?;
        if key == "checkpoint" {
            checkpoint_id = Some(value.to_string());
        } else {
            fields.insert(key, value);
        }
    }
    let int = |key: &str| -> Result<usize> {
        fields
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Input(format!("report missing count {key:?}")))
    };
    let real = |key: &str| -> Result<f64> {
        fields
            .get(key)
            .and_then(|v| v.parse::<f64>().ok())
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::Input(format!("report missing metric {key:?}")))
    };
    let counts =
        ConfusionCounts { tp: int("tp")?, fp: int("fp")?, fn_: int("fn")?, tn: int("tn")? };
    if counts.total() != int("sessions")? {
        return Err(Error::Input("report counts do not sum to sessions".into()));
    }
    Ok(ParsedReport {
        checkpoint_id: checkpoint_id
            .ok_or_else(|| Error::Input("report missing checkpoint id".into()))?,
        report: MetricsReport {
            threshold: real("threshold")?,
            counts,
            precision: real("precision")?,
            recall: real("recall")?,
            f1: real("f1")?,
        },
    })
}
