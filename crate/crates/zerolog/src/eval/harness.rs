//! Experiment harnesses over the full pipeline: one cross-system run
//! (embed, train, detect, score), the paired meta-learning ablation,
//! single-axis sensitivity sweeps, and inference latency measurement.

use std::time::Instant;

use super::{
    compute_metrics, detect, embed_session, score_against_gold, MetricsReport,
};
use crate::data::{take_fraction, DataPair};
use crate::embed::{
    build_global_embeddings, Aggregation, EmbeddingConfig, TemplateIdf, WordVectorTable,
};
use crate::error::{Error, Result};
use crate::net::{NetworkConfig, NetworkParams, Seq};
use crate::train::{derive_seed, train, Hyperparams, StopCriterion, TrainData, TrainOutcome};
use crate::parser::Label;

pub(crate) const SALT_INIT: u64 = 0x6e65_7469;
pub(crate) const SALT_SRC_FRAC: u64 = 0x7346_7261;
pub(crate) const SALT_TGT_FRAC: u64 = 0x7446_7261;

/// Everything one run needs besides the data. The seed drives network
/// initialization, task sampling, the holdout carve and fraction carves;
/// two runs with equal spec and data are identical.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub embedding: EmbeddingConfig,
    pub network: NetworkConfig,
    pub hyperparams: Hyperparams,
    pub stop: StopCriterion,
    pub seed: u64,
    pub threshold: f64,
    /// Stratified fraction of labeled source sessions used for training.
    pub source_fraction: f64,
    /// Stratified fraction of target sessions fed to the adversarial pass;
    /// evaluation always runs on the full target corpus.
    pub target_fraction: f64,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            embedding: EmbeddingConfig::default(),
            network: NetworkConfig::default(),
            hyperparams: Hyperparams::default(),
            stop: StopCriterion::default(),
            seed: 7,
            threshold: 0.5,
            source_fraction: 1.0,
            target_fraction: 1.0,
        }
    }
}

impl RunSpec {
    pub fn validate(&self) -> Result<()> {
        self.hyperparams.validate()?;
        self.stop.validate()?;
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} not in [0, 1]", self.threshold)));
        }
        if self.network.input_dim != self.embedding.dimension {
            return Err(Error::Config(format!(
                "network input_dim {} does not match embedding dimension {}",
                self.network.input_dim, self.embedding.dimension
            )));
        }
        for (name, f) in
            [("source_fraction", self.source_fraction), ("target_fraction", self.target_fraction)]
        {
            if !f.is_finite() || f <= 0.0 || f > 1.0 {
                return Err(Error::Config(format!("{name} {f} not in (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub train: TrainOutcome,
    /// Scored on the full target corpus against the gold handle.
    pub target_report: MetricsReport,
    /// Scored on the training portion of the source corpus.
    pub source_report: MetricsReport,
    /// Embedding-table misses across training inputs and detection.
    pub oov_events: usize,
}

/// One cross-system run: carve fractions, embed the union of templates,
/// train on labeled source plus unlabeled target, then score both sides.
pub fn run_pipeline(
    pair: &DataPair,
    table: &WordVectorTable,
    spec: &RunSpec,
) -> Result<RunOutcome> {
    spec.validate()?;
    let src_corpus =
        take_fraction(&pair.source, spec.source_fraction, derive_seed(spec.seed, SALT_SRC_FRAC))?;
    let tgt_corpus =
        take_fraction(&pair.target, spec.target_fraction, derive_seed(spec.seed, SALT_TGT_FRAC))?;

    let idf = match spec.embedding.aggregation {
        // document statistics from source templates only
        Aggregation::TfIdfWeighted => {
            Some(TemplateIdf::from_store(&pair.source_store, spec.embedding.normalize_tokens))
        }
        Aggregation::Mean => None,
    };
    let embeddings = build_global_embeddings(
        &[
            (pair.source.system.as_str(), &pair.source_store),
            (pair.target.system.as_str(), &pair.target_store),
        ],
        table,
        &spec.embedding,
        idf.as_ref(),
    )?;

    let mut oov_events = 0;
    let mut src: Vec<Seq> = Vec::with_capacity(src_corpus.sessions.len());
    let mut src_y = Vec::with_capacity(src_corpus.sessions.len());
    for s in &src_corpus.sessions {
        let y = match s.label {
            Label::Normal => 0.0,
            Label::Anomalous => 1.0,
            Label::Unlabeled => {
                return Err(Error::Input(format!("unlabeled source session {:?}", s.key)))
            }
        };
        let (seq, oov) =
            embed_session(&s.event_ids, &src_corpus.system, &embeddings, &spec.embedding);
        oov_events += oov;
        src.push(seq);
        src_y.push(y);
    }
    let mut tgt: Vec<Seq> = Vec::with_capacity(tgt_corpus.sessions.len());
    for s in &tgt_corpus.sessions {
        let (seq, oov) =
            embed_session(&s.event_ids, &tgt_corpus.system, &embeddings, &spec.embedding);
        oov_events += oov;
        tgt.push(seq);
    }
    let data = TrainData { src, src_y, tgt };

    let network = NetworkConfig { init_seed: derive_seed(spec.seed, SALT_INIT), ..spec.network };
    let outcome = train(&data, network, &spec.hyperparams, &spec.stop, spec.seed, &mut |_| {})?;

    let (target_dets, tstats) = detect(
        &pair.target.sessions,
        &pair.target.system,
        &embeddings,
        &spec.embedding,
        &outcome.params,
        spec.threshold,
    )?;
    oov_events += tstats.oov_events;
    let target_report = score_against_gold(&target_dets, &pair.gold, spec.threshold)?;

    let (source_dets, sstats) = detect(
        &src_corpus.sessions,
        &src_corpus.system,
        &embeddings,
        &spec.embedding,
        &outcome.params,
        spec.threshold,
    )?;
    oov_events += sstats.oov_events;
    let predicted: Vec<bool> = source_dets.iter().map(|d| d.anomalous).collect();
    let gold: Vec<bool> =
        src_corpus.sessions.iter().map(|s| s.label == Label::Anomalous).collect();
    let source_report = compute_metrics(&predicted, &gold, spec.threshold)?;

    Ok(RunOutcome { train: outcome, target_report, source_report, oov_events })
}

#[derive(Debug)]
pub struct AblationOutcome {
    pub full: RunOutcome,
    /// inner_steps = 0: the outer step degenerates to joint gradient
    /// descent over pooled batches, removing meta-learning and nothing else.
    pub no_meta: RunOutcome,
}

/// Trains the full method and the no-meta-learning variant under identical
/// seeds and budgets.
pub fn run_ablation(
    pair: &DataPair,
    table: &WordVectorTable,
    spec: &RunSpec,
) -> Result<AblationOutcome> {
    let full = run_pipeline(pair, table, spec)?;
    let mut variant = spec.clone();
    variant.hyperparams.inner_steps = 0;
    let no_meta = run_pipeline(pair, table, &variant)?;
    Ok(AblationOutcome { full, no_meta })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Beta,
    Gamma,
    SourceFraction,
    TargetFraction,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepAxis::Beta => "beta",
            SweepAxis::Gamma => "gamma",
            SweepAxis::SourceFraction => "source_fraction",
            SweepAxis::TargetFraction => "target_fraction",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<SweepAxis> {
        match s {
            "beta" => Ok(SweepAxis::Beta),
            "gamma" => Ok(SweepAxis::Gamma),
            "source_fraction" => Ok(SweepAxis::SourceFraction),
            "target_fraction" => Ok(SweepAxis::TargetFraction),
            other => Err(Error::Config(format!(
                "unknown sweep axis {other:?} (beta, gamma, source_fraction, target_fraction)"
            ))),
        }
    }
}

/// One independent run per axis value, everything else fixed including the
/// seed. Returns target-side metrics per value.
pub fn run_sweep(
    pair: &DataPair,
    table: &WordVectorTable,
    base: &RunSpec,
    axis: SweepAxis,
    values: &[f64],
) -> Result<Vec<(f64, MetricsReport)>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one axis value".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &v in values {
        let mut spec = base.clone();
        match axis {
            SweepAxis::Beta => spec.hyperparams.beta = v,
            SweepAxis::Gamma => spec.hyperparams.gamma = v,
            SweepAxis::SourceFraction => spec.source_fraction = v,
            SweepAxis::TargetFraction => spec.target_fraction = v,
        }
        let outcome = run_pipeline(pair, table, &spec)?;
        rows.push((v, outcome.target_report));
    }
    Ok(rows)
}

/// Plot-ready text, one line per grid point.
pub fn sweep_tsv(axis: SweepAxis, rows: &[(f64, MetricsReport)]) -> String {
    let mut out = format!("{}\tprecision\trecall\tf1\n", axis.as_str());
    for (v, m) in rows {
        out.push_str(&format!("{v}\t{:.6}\t{:.6}\t{:.6}\n", m.precision, m.recall, m.f1));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p99_ms: f64,
    pub samples: usize,
}

/// Wall-clock per-sequence forward latency over `repetitions` passes, after
/// one untimed warm-up pass. Nearest-rank p99.
pub fn measure_inference(
    params: &NetworkParams,
    seqs: &[Seq],
    repetitions: usize,
) -> Result<LatencyStats> {
    if seqs.is_empty() {
        return Err(Error::Input("no sequences to time".into()));
    }
    if repetitions == 0 {
        return Err(Error::Config("repetitions must be >= 1".into()));
    }
    for seq in seqs {
        std::hint::black_box(params.classify_anomaly(seq));
    }
    let mut samples = Vec::with_capacity(seqs.len() * repetitions);
    for _ in 0..repetitions {
        for seq in seqs {
            let t0 = Instant::now();
            std::hint::black_box(params.classify_anomaly(seq));
            samples.push(t0.elapsed().as_secs_f64() * 1e3);
        }
    }
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len();
    let mean_ms = samples.iter().sum::<f64>() / n as f64;
    let median_ms = if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    };
    let p99_ms = samples[((n as f64 * 0.99).ceil() as usize).max(1) - 1];
    Ok(LatencyStats { mean_ms, median_ms, p99_ms, samples: n })
}
