//! Command-line front end. Eight commands cover the pipeline from corpus
//! generation to sensitivity sweeps; each one reads the shared TOML config,
//! consumes the artifacts of the previous stage from the out directory, and
//! writes its own plus a manifest with content digests of everything it
//! touched. Apart from the manifest timestamp, a rerun with the same config,
//! inputs and seed reproduces every artifact and every stdout byte.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{RunConfig, SystemConfig};
use crate::data::{
    generate_synthetic_pair, ingest_files, join_labels, label_by_key_list, load_label_map,
    read_hdfs_labels, strip_labels, take_fraction, Corpus, DataPair, EvalGold, IngestReport,
};
use crate::embed::{build_global_embeddings, Aggregation, EventEmbedding, TemplateIdf, WordVectorTable};
use crate::error::{Error, Result};
use crate::eval::harness::{SALT_INIT, SALT_SRC_FRAC, SALT_TGT_FRAC};
use crate::eval::{
    detect, render_report, run_ablation, run_sweep, score_against_gold, sweep_tsv, Detection,
    RunSpec, SweepAxis,
};
use crate::manifest::{sha256_hex, Manifest};
use crate::net::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::net::NetworkConfig;
use crate::parser::{
    read_sessions, read_templates, write_sessions, write_templates, Label, TemplateStore,
};
use crate::train::{derive_seed, train, TrainData, TrainEvent};

const CONFIG_HELP: &str = "\
Configuration file keys (TOML) with their defaults. Entries marked * follow
the published method defaults.

  seed = 7                     master run seed; every internal stream derives
                               from it. --seed overrides it (and reseeds the
                               synthetic generator).
  out = \"out\"                  artifact directory; --out overrides.
  threshold = 0.5              anomaly decision threshold; --threshold
                               overrides for detect and eval.
  source_fraction = 1.0        labeled source sessions used for training.
  target_fraction = 1.0        unlabeled target sessions used for training.
                               Evaluation always uses the full target corpus.
  vectors = <path>             optional word vector table, one `token v1 v2
                               ...` per line; without it every word takes the
                               seeded-hash fallback vector.

  [source] / [target]          the transfer pair. Both default to synthetic
                               profiles reading the synth command's output.
    system = \"synth-src\"       system id stamped into embedding keys
                               (target default \"synth-tgt\").
    profile = \"synthetic\"      hdfs | bgl | openstack | synthetic.
    log = <path>               raw log; defaults to <out>/source.log and
                               <out>/target.log.
    extra_logs = []            further raw logs appended after log.
    labels = <path>            label sidecar: hdfs block CSV, openstack
                               anomalous-instance list, `key\\t0|1` map
                               otherwise. bgl labels are inline; a sidecar
                               there is an error. Synthetic sides default to
                               the synth command's label files.
    strip_tokens = <n>         override the profile's header-token count.
    masks = [[pat, rep], ...]  override the profile's masking rules.
    session = { ... }          override the session rule: { key_regex = \"..\" },
                               { fixed_count = n } or
                               { time_window = { seconds = n, stride = n } }.

  [parser]
    tree_depth = 4 *           parse-tree depth; the first depth-2 tokens
                               route a line.
    similarity_threshold = 0.5 *  template merge threshold.
    max_children = 100 *       routing fanout before the overflow bucket.

  [synthetic]                  paired-corpus generator (synth command).
    templates_per_system = 12  distinct event kinds per system.
    vocabulary_overlap = 0.6   shared-wording probability per token slot.
    anomaly_rate = 0.15        anomalous fraction of sessions.
    session_length = [8, 16]   events per session (min, max).
    shift_strength = 0.5       how far anomaly wording diverges across the
                               two systems.
    sessions_per_system = 200
    seed = 7

  [embedding]
    aggregation = \"mean\" *     \"mean\" or \"tf_idf_weighted\" (idf fitted on
                               source templates only).
    oov_policy = \"seeded_hash\" \"zero\" or \"seeded_hash\" for unknown words.
    dimension = 300 *          vector width; must equal network.input_dim.
    normalize_tokens = true    lowercase plus camelCase/snake_case splitting.
    hash_seed = 0x7a65726f6c6f6721  seed for the fallback hash vectors.

  [network]
    input_dim = 300 *          event vector width.
    hidden_dim = 128 *         recurrent state width.
    attention_dim = 64 *       attention projection width.
    head_hidden_dim = 64       classifier and discriminator hidden width.
    init_seed = 1              ignored by train, which derives the
                               initialization from the run seed.

  [hyperparams]
    delta = 0.003 *            discriminator learning rate.
    lambda_d = 0.003 *         classifier learning rate.
    kappa = 0.003 *            inner adaptation rate.
    alpha = 1.0 *              adversarial weight inside the task objective.
    meta_lr = 0.003 *          outer meta-update rate.
    beta = 2.0 *               domain confusion weight.
    gamma = 2.5 *              task loss weight.
    batch_size = 256 *         sessions per sampled batch.
    inner_steps = 1 *          adaptation steps per task; 0 disables the
                               meta loop.
    meta_batch = 4             tasks per outer update.
    first_order = true         drop second-order terms in the meta gradient.

  [stop]
    max_iterations = 300 *     outer iterations; 0 writes the untouched
                               initialization.
    early_stop_patience = 10   holdout checks without improvement before
                               stopping; 0 disables the holdout split.
    holdout_fraction = 0.1     source fraction reserved for early stopping.
";

#[derive(Parser)]
#[command(
    name = "zerolog",
    version,
    about = "Cross-system log anomaly detection with zero target labels",
    after_long_help = CONFIG_HELP
)]
pub struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration TOML; relative paths inside it resolve against its
    /// directory.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed (synth also reseeds the generator).
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config out directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ThresholdArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Overrides the config decision threshold.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Axis to sweep: beta, gamma, source_fraction or target_fraction.
    #[arg(long)]
    axis: SweepAxis,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the paired synthetic corpora and their label files.
    Synth(CommonArgs),
    /// Mine templates and group sessions for both systems. Target labels are
    /// stripped to the gold file; training never sees them.
    Parse(CommonArgs),
    /// Embed every template of both systems into the shared vector space.
    Embed(CommonArgs),
    /// Train the detector on labeled source and unlabeled target sessions.
    Train(CommonArgs),
    /// Score every target session with a trained checkpoint.
    Detect(ThresholdArgs),
    /// Compare detections against the target gold labels.
    Eval(ThresholdArgs),
    /// Train and evaluate the full method and the no-meta variant side by
    /// side on identical data.
    Ablate(CommonArgs),
    /// Re-run the pipeline across one hyperparameter axis.
    Sweep(SweepArgs),
}

/// Process exit code for main. Usage errors exit 2 via clap itself.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::Parse(a) => cmd_parse(a),
        Cmd::Embed(a) => cmd_embed(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Detect(a) => cmd_detect(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Ablate(a) => cmd_ablate(a),
        Cmd::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Loads the config, applies the flag overrides and creates the out dir.
fn load_cfg(common: &CommonArgs, threshold: Option<f64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.synthetic.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(t) = threshold {
        cfg.threshold = t;
    }
    cfg.validate()?;
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    Ok(cfg)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn cmd_synth(args: CommonArgs) -> Result<()> {
    let cfg = load_cfg(&args, None)?;
    let mut manifest = Manifest::new("synth", &cfg)?;
    manifest.record_input("config", &args.config)?;

    let pair = generate_synthetic_pair(&cfg.synthetic)?;
    let src_log = cfg.out.join("source.log");
    let src_labels = cfg.out.join("source-labels.tsv");
    let tgt_log = cfg.out.join("target.log");
    let tgt_gold = cfg.target_gold();

    write_bytes(&src_log, (pair.source_lines.join("\n") + "\n").as_bytes())?;
    crate::data::save_label_map(&src_labels, &pair.source_labels)?;
    write_bytes(&tgt_log, (pair.target_lines.join("\n") + "\n").as_bytes())?;
    pair.target_gold.save(&tgt_gold)?;

    let anomalies = |m: &std::collections::BTreeMap<String, bool>| m.values().filter(|&&a| a).count();
    println!(
        "source: {} lines, {} sessions, {} anomalous",
        pair.source_lines.len(),
        pair.source_labels.len(),
        anomalies(&pair.source_labels)
    );
    let (tgt_normal, tgt_anomalous) = pair.target_gold.class_counts();
    println!(
        "target: {} lines, {} sessions, {} anomalous",
        pair.target_lines.len(),
        tgt_normal + tgt_anomalous,
        tgt_anomalous
    );

    for (name, path) in [
        ("source_log", &src_log),
        ("source_labels", &src_labels),
        ("target_log", &tgt_log),
        ("target_gold", &tgt_gold),
    ] {
        manifest.record_output(name, path)?;
    }
    manifest.write(&cfg.out)?;
    Ok(())
}

fn side_logs(primary: PathBuf, side: &SystemConfig) -> Vec<PathBuf> {
    let mut logs = vec![primary];
    logs.extend(side.extra_logs.iter().cloned());
    logs
}

fn ingest_side(
    cfg: &RunConfig,
    side: &SystemConfig,
    logs: &[PathBuf],
) -> Result<(Corpus, TemplateStore, IngestReport)> {
    let drain = side.drain_config(&cfg.parser)?;
    let spec = side.session_spec()?;
    ingest_files(logs, drain, &spec, side.profile == "bgl")
}

/// Joins the profile-shaped label sidecar onto a parsed corpus.
fn apply_labels(
    corpus: Corpus,
    report: &mut IngestReport,
    profile: &str,
    labels: &Path,
) -> Result<Corpus> {
    match profile {
        "hdfs" => {
            let (joined, stats) = join_labels(&corpus, &read_hdfs_labels(labels)?)?;
            report.unmatched_dropped += stats.unmatched_dropped;
            Ok(joined)
        }
        "openstack" => {
            let mut corpus = corpus;
            label_by_key_list(&mut corpus, labels)?;
            Ok(corpus)
        }
        _ => {
            let (joined, stats) = join_labels(&corpus, &load_label_map(labels)?)?;
            report.unmatched_dropped += stats.unmatched_dropped;
            Ok(joined)
        }
    }
}

fn print_side(name: &str, corpus: &Corpus, templates: usize, report: &IngestReport) {
    let c = corpus.counts();
    println!(
        "{name}: {} lines, {} templates, {} sessions ({} anomalous, {} normal, {} unlabeled)",
        report.lines_read,
        templates,
        corpus.sessions.len(),
        c.anomalous,
        c.normal,
        c.unlabeled
    );
    if report.degenerate_skipped + report.malformed_skipped + report.dropped_no_key > 0 {
        println!(
            "{name}: skipped {} degenerate, {} malformed, {} without session key",
            report.degenerate_skipped, report.malformed_skipped, report.dropped_no_key
        );
    }
    if report.unmatched_dropped > 0 {
        println!("{name}: dropped {} sessions without label entries", report.unmatched_dropped);
    }
}

fn cmd_parse(args: CommonArgs) -> Result<()> {
    let cfg = load_cfg(&args, None)?;
    let mut manifest = Manifest::new("parse", &cfg)?;
    manifest.record_input("config", &args.config)?;

    // Source side: labels join onto the sessions, training reads them.
    let src_logs = side_logs(cfg.source_log(), &cfg.source);
    for (i, log) in src_logs.iter().enumerate() {
        manifest.record_input(&format!("source_log_{i}"), log)?;
    }
    let (mut src_corpus, src_store, mut src_report) = ingest_side(&cfg, &cfg.source, &src_logs)?;
    if let Some(labels) = cfg.source_labels() {
        manifest.record_input("source_labels", &labels)?;
        src_corpus = apply_labels(src_corpus, &mut src_report, &cfg.source.profile, &labels)?;
    }
    let src_templates = cfg.templates_path("source");
    let src_sessions = cfg.sessions_path("source");
    write_templates(&src_templates, src_store.iter())?;
    write_sessions(&src_sessions, &src_corpus.sessions)?;
    print_side("source", &src_corpus, src_store.len(), &src_report);

    // Target side: whatever labels exist are stripped into the gold file,
    // which only eval reads. The session file always carries `-` labels.
    let tgt_logs = side_logs(cfg.target_log(), &cfg.target);
    for (i, log) in tgt_logs.iter().enumerate() {
        manifest.record_input(&format!("target_log_{i}"), log)?;
    }
    let (mut tgt_corpus, tgt_store, mut tgt_report) = ingest_side(&cfg, &cfg.target, &tgt_logs)?;
    if let Some(labels) = cfg.target_labels() {
        manifest.record_input("target_labels", &labels)?;
        tgt_corpus = apply_labels(tgt_corpus, &mut tgt_report, &cfg.target.profile, &labels)?;
    }
    let (stripped, gold) = strip_labels(&tgt_corpus);
    let tgt_templates = cfg.templates_path("target");
    let tgt_sessions = cfg.sessions_path("target");
    write_templates(&tgt_templates, tgt_store.iter())?;
    write_sessions(&tgt_sessions, &stripped.sessions)?;
    print_side("target", &stripped, tgt_store.len(), &tgt_report);
    if !gold.is_empty() {
        println!("target: {} session labels held out for evaluation", gold.len());
    }

    for (name, path) in [
        ("source_templates", &src_templates),
        ("source_sessions", &src_sessions),
        ("target_templates", &tgt_templates),
        ("target_sessions", &tgt_sessions),
    ] {
        manifest.record_output(name, path)?;
    }
    if !gold.is_empty() {
        let gold_path = cfg.target_gold();
        gold.save(&gold_path)?;
        manifest.record_output("target_gold", &gold_path)?;
    }
    manifest.write(&cfg.out)?;
    Ok(())
}

fn load_store(path: &Path) -> Result<TemplateStore> {
    TemplateStore::from_templates(read_templates(path)?)
}

fn load_vectors(cfg: &RunConfig) -> Result<WordVectorTable> {
    match &cfg.vectors {
        Some(path) => {
            let (table, stats) = WordVectorTable::load(path, cfg.embedding.dimension)?;
            println!("vectors: {} words kept, {} skipped", table.len(), stats.skipped);
            Ok(table)
        }
        None => Ok(WordVectorTable::empty(cfg.embedding.dimension)),
    }
}

fn cmd_embed(args: CommonArgs) -> Result<()> {
    let cfg = load_cfg(&args, None)?;
    let mut manifest = Manifest::new("embed", &cfg)?;
    manifest.record_input("config", &args.config)?;

    let src_path = cfg.templates_path("source");
    let tgt_path = cfg.templates_path("target");
    manifest.record_input("source_templates", &src_path)?;
    manifest.record_input("target_templates", &tgt_path)?;
    let src_store = load_store(&src_path)?;
    let tgt_store = load_store(&tgt_path)?;
    if let Some(v) = &cfg.vectors {
        manifest.record_input("vectors", v)?;
    }
    let table = load_vectors(&cfg)?;

    // Idf statistics may only come from the source side: target template
    // frequencies are unlabeled but still target-side knowledge.
    let idf = (cfg.embedding.aggregation == Aggregation::TfIdfWeighted)
        .then(|| TemplateIdf::from_store(&src_store, cfg.embedding.normalize_tokens));
    let embeddings = build_global_embeddings(
        &[(cfg.source.system.as_str(), &src_store), (cfg.target.system.as_str(), &tgt_store)],
        &table,
        &cfg.embedding,
        idf.as_ref(),
    )?;
    let out_path = cfg.embeddings_path();
    embeddings.save(&out_path)?;
    println!(
        "embeddings: {} templates ({} source, {} target), dimension {}",
        embeddings.len(),
        src_store.len(),
        tgt_store.len(),
        embeddings.dimension()
    );
    manifest.record_output("embeddings", &out_path)?;
    manifest.write(&cfg.out)?;
    Ok(())
}

/// Session file plus embeddings to training sequences. Source sessions must
/// be labeled; the caller handles the target side's unlabeled invariant.
fn sessions_to_seqs(
    corpus: &Corpus,
    embeddings: &EventEmbedding,
    cfg: &RunConfig,
) -> (Vec<crate::net::Seq>, usize) {
    let mut seqs = Vec::with_capacity(corpus.sessions.len());
    let mut oov = 0;
    for s in &corpus.sessions {
        let (seq, missing) =
            crate::eval::embed_session(&s.event_ids, &corpus.system, embeddings, &cfg.embedding);
        oov += missing;
        seqs.push(seq);
    }
    (seqs, oov)
}

fn cmd_train(args: CommonArgs) -> Result<()> {
    let cfg = load_cfg(&args, None)?;
    let mut manifest = Manifest::new("train", &cfg)?;
    manifest.record_input("config", &args.config)?;

    let src_path = cfg.sessions_path("source");
    let tgt_path = cfg.sessions_path("target");
    let emb_path = cfg.embeddings_path();
    manifest.record_input("source_sessions", &src_path)?;
    manifest.record_input("target_sessions", &tgt_path)?;
    manifest.record_input("embeddings", &emb_path)?;

    let src_sessions = read_sessions(&src_path)?;
    let tgt_sessions = read_sessions(&tgt_path)?;
    if tgt_sessions.iter().any(|s| s.label != Label::Unlabeled) {
        return Err(Error::Input(
            "target sessions carry labels; training must not see them (re-run parse)".into(),
        ));
    }
    let embeddings = EventEmbedding::load(&emb_path)?;
    if embeddings.dimension() != cfg.network.input_dim {
        return Err(Error::Input(format!(
            "embeddings have dimension {}, network.input_dim is {}",
            embeddings.dimension(),
            cfg.network.input_dim
        )));
    }

    let src_corpus = Corpus { system: cfg.source.system.clone(), sessions: src_sessions };
    let tgt_corpus = Corpus { system: cfg.target.system.clone(), sessions: tgt_sessions };
    let src_corpus =
        take_fraction(&src_corpus, cfg.source_fraction, derive_seed(cfg.seed, SALT_SRC_FRAC))?;
    let tgt_corpus =
        take_fraction(&tgt_corpus, cfg.target_fraction, derive_seed(cfg.seed, SALT_TGT_FRAC))?;

    let mut src_y = Vec::with_capacity(src_corpus.sessions.len());
    for s in &src_corpus.sessions {
        match s.label {
            Label::Normal => src_y.push(0.0),
            Label::Anomalous => src_y.push(1.0),
            Label::Unlabeled => {
                return Err(Error::Input(format!(
                    "source session {:?} is unlabeled; training needs source labels",
                    s.key
                )))
            }
        }
    }
    let (src, src_oov) = sessions_to_seqs(&src_corpus, &embeddings, &cfg);
    let (tgt, tgt_oov) = sessions_to_seqs(&tgt_corpus, &embeddings, &cfg);
    println!(
        "training on {} source / {} target sessions ({} events missing embeddings)",
        src.len(),
        tgt.len(),
        src_oov + tgt_oov
    );

    let data = TrainData { src, src_y, tgt };
    let network = NetworkConfig { init_seed: derive_seed(cfg.seed, SALT_INIT), ..cfg.network };
    let mut rows = Vec::new();
    let outcome = train(&data, network, &cfg.hyperparams, &cfg.stop, cfg.seed, &mut |e| match e {
        TrainEvent::Iteration(row) => {
            if row.iteration == 1
                || row.iteration % 25 == 0
                || row.iteration == cfg.stop.max_iterations
            {
                println!(
                    "iter {}: task {:.6} class {:.6} domain {:.6}",
                    row.iteration, row.loss_task, row.loss_c, row.loss_ad
                );
            }
            rows.push(*row);
        }
        TrainEvent::SkippedStep { iteration, consecutive } => {
            println!("iter {iteration}: non-finite step rolled back ({consecutive} in a row)");
        }
        TrainEvent::EarlyStop { iteration, best_iteration, best_loss } => {
            println!(
                "early stop at iter {iteration}: best holdout {best_loss:.6} from iter {best_iteration}"
            );
        }
    })?;

    let mut history = Vec::new();
    writeln!(history, "iteration\tclass_loss\tdomain_loss\ttask_loss\tholdout_loss")
        .expect("write to vec");
    for r in &rows {
        let holdout =
            r.holdout_loss.map(|h| format!("{h:.6}")).unwrap_or_else(|| "-".to_string());
        writeln!(
            history,
            "{}\t{:.6}\t{:.6}\t{:.6}\t{holdout}",
            r.iteration, r.loss_c, r.loss_ad, r.loss_task
        )
        .expect("write to vec");
    }
    let history_path = cfg.history_path();
    write_bytes(&history_path, &history)?;

    let ckpt_path = cfg.checkpoint_path();
    let hyperparams = serde_json::to_value(&cfg.hyperparams)
        .map_err(|e| Error::Config(format!("hyperparams not serializable: {e}")))?;
    save_checkpoint(
        &ckpt_path,
        &Checkpoint {
            params: outcome.params.clone(),
            seed: cfg.seed,
            iteration: outcome.iterations_run,
            hyperparams,
        },
    )?;
    println!(
        "trained {} iterations ({} skipped){}",
        outcome.iterations_run,
        outcome.skipped_steps,
        if outcome.stopped_early { ", stopped early" } else { "" }
    );

    manifest.record_output("checkpoint", &ckpt_path)?;
    manifest.record_output("history", &history_path)?;
    manifest.write(&cfg.out)?;
    Ok(())
}

fn cmd_detect(args: ThresholdArgs) -> Result<()> {
    let cfg = load_cfg(&args.common, args.threshold)?;
    let mut manifest = Manifest::new("detect", &cfg)?;
    manifest.record_input("config", &args.common.config)?;

    let ckpt_path = cfg.checkpoint_path();
    let emb_path = cfg.embeddings_path();
    let tgt_path = cfg.sessions_path("target");
    manifest.record_input("checkpoint", &ckpt_path)?;
    manifest.record_input("embeddings", &emb_path)?;
    manifest.record_input("target_sessions", &tgt_path)?;

    let ckpt = load_checkpoint(&ckpt_path)?;
    let embeddings = EventEmbedding::load(&emb_path)?;
    let sessions = read_sessions(&tgt_path)?;
    let (detections, stats) = detect(
        &sessions,
        &cfg.target.system,
        &embeddings,
        &cfg.embedding,
        &ckpt.params,
        cfg.threshold,
    )?;

    let mut out = Vec::new();
    for d in &detections {
        // Shortest round-trip float form, so eval reads back the exact value.
        writeln!(out, "{}\t{}\t{}", d.key, d.probability, u8::from(d.anomalous))
            .expect("write to vec");
    }
    let det_path = cfg.detections_path();
    write_bytes(&det_path, &out)?;

    let flagged = detections.iter().filter(|d| d.anomalous).count();
    println!(
        "scored {} sessions at threshold {:.6}: {} flagged, {} events missing embeddings",
        detections.len(),
        cfg.threshold,
        flagged,
        stats.oov_events
    );
    manifest.record_output("detections", &det_path)?;
    manifest.write(&cfg.out)?;
    Ok(())
}

fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut detections = Vec::new();
    for (no, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Input(format!("{}:{}: {what}", path.display(), no + 1));
        let mut parts = line.splitn(3, '\t');
        let key = parts.next().ok_or_else(|| bad("missing key"))?;
        let prob: f64 = parts
            .next()
            .ok_or_else(|| bad("missing probability"))?
            .parse()
            .map_err(|_| bad("bad probability"))?;
        let flag = match parts.next() {
            Some("0") => false,
            Some("1") => true,
            _ => return Err(bad("missing 0|1 flag")),
        };
        detections.push(Detection { key: key.to_string(), probability: prob, anomalous: flag });
    }
    if detections.is_empty() {
        return Err(Error::Input(format!("{} holds no detections", path.display())));
    }
    Ok(detections)
}

fn cmd_eval(args: ThresholdArgs) -> Result<()> {
    let cfg = load_cfg(&args.common, args.threshold)?;
    let mut manifest = Manifest::new("eval", &cfg)?;
    manifest.record_input("config", &args.common.config)?;

    let det_path = cfg.detections_path();
    let gold_path = cfg.target_gold();
    manifest.record_input("detections", &det_path)?;
    manifest.record_input("target_gold", &gold_path)?;

    let detections = read_detections(&det_path)?;
    let gold = EvalGold::load(&gold_path)?;
    let report = score_against_gold(&detections, &gold, cfg.threshold)?;

    // The report names the checkpoint by content digest when one is present.
    let ckpt_path = cfg.checkpoint_path();
    let checkpoint_id = match sha256_hex(&ckpt_path) {
        Ok((digest, _)) => {
            manifest.record_input("checkpoint", &ckpt_path)?;
            digest[..12].to_string()
        }
        Err(_) => "-".to_string(),
    };
    let text = render_report(&report, &checkpoint_id);
    let report_path = cfg.report_path();
    write_bytes(&report_path, text.as_bytes())?;
    print!("{text}");

    manifest.record_output("report", &report_path)?;
    manifest.write(&cfg.out)?;
    Ok(())
}

/// Rebuilds the training pair from the parse artifacts. The harness commands
/// (ablate, sweep) need corpora, stores and the gold handle together.
fn load_pair(cfg: &RunConfig, manifest: &mut Manifest) -> Result<DataPair> {
    let src_sessions = cfg.sessions_path("source");
    let tgt_sessions = cfg.sessions_path("target");
    let src_templates = cfg.templates_path("source");
    let tgt_templates = cfg.templates_path("target");
    let gold_path = cfg.target_gold();
    for (name, path) in [
        ("source_sessions", &src_sessions),
        ("target_sessions", &tgt_sessions),
        ("source_templates", &src_templates),
        ("target_templates", &tgt_templates),
        ("target_gold", &gold_path),
    ] {
        manifest.record_input(name, path)?;
    }
    let source =
        Corpus { system: cfg.source.system.clone(), sessions: read_sessions(&src_sessions)? };
    let target =
        Corpus { system: cfg.target.system.clone(), sessions: read_sessions(&tgt_sessions)? };
    Ok(DataPair {
        source,
        source_store: load_store(&src_templates)?,
        target,
        target_store: load_store(&tgt_templates)?,
        gold: EvalGold::load(&gold_path)?,
    })
}

fn run_spec(cfg: &RunConfig) -> RunSpec {
    RunSpec {
        embedding: cfg.embedding.clone(),
        network: cfg.network,
        hyperparams: cfg.hyperparams.clone(),
        stop: cfg.stop.clone(),
        seed: cfg.seed,
        threshold: cfg.threshold,
        source_fraction: cfg.source_fraction,
        target_fraction: cfg.target_fraction,
    }
}

fn cmd_ablate(args: CommonArgs) -> Result<()> {
    let cfg = load_cfg(&args, None)?;
    let mut manifest = Manifest::new("ablate", &cfg)?;
    manifest.record_input("config", &args.config)?;

    let pair = load_pair(&cfg, &mut manifest)?;
    if let Some(v) = &cfg.vectors {
        manifest.record_input("vectors", v)?;
    }
    let table = load_vectors(&cfg)?;
    let outcome = run_ablation(&pair, &table, &run_spec(&cfg))?;

    let full_text = render_report(&outcome.full.target_report, "ablate-full");
    let no_meta_text = render_report(&outcome.no_meta.target_report, "ablate-no-meta");
    let full_path = cfg.out.join("ablation-full.txt");
    let no_meta_path = cfg.out.join("ablation-no-meta.txt");
    write_bytes(&full_path, full_text.as_bytes())?;
    write_bytes(&no_meta_path, no_meta_text.as_bytes())?;

    println!("full:");
    print!("{full_text}");
    println!("no-meta:");
    print!("{no_meta_text}");
    let gain = (outcome.full.target_report.f1 - outcome.no_meta.target_report.f1) * 100.0;
    println!("meta gain: {gain:+.2} F1 points");

    manifest.record_output("ablation_full", &full_path)?;
    manifest.record_output("ablation_no_meta", &no_meta_path)?;
    manifest.write(&cfg.out)?;
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let cfg = load_cfg(&args.common, None)?;
    let mut manifest = Manifest::new("sweep", &cfg)?;
    manifest.record_input("config", &args.common.config)?;

    let pair = load_pair(&cfg, &mut manifest)?;
    if let Some(v) = &cfg.vectors {
        manifest.record_input("vectors", v)?;
    }
    let table = load_vectors(&cfg)?;
    let rows = run_sweep(&pair, &table, &run_spec(&cfg), args.axis, &args.values)?;
    let text = sweep_tsv(args.axis, &rows);
    let sweep_path = cfg.out.join("sweep.tsv");
    write_bytes(&sweep_path, text.as_bytes())?;
    print!("{text}");

    manifest.record_output("sweep", &sweep_path)?;
    manifest.write(&cfg.out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn every_config_key_appears_in_the_help_text() {
        // The long help promises a complete key reference; keep it honest
        // against the actual config schema.
        let value = serde_json::to_value(RunConfig::default()).unwrap();
        let mut keys = Vec::new();
        collect_keys(&value, &mut keys);
        for key in keys {
            assert!(
                CONFIG_HELP.contains(&key),
                "config key {key:?} missing from the help text"
            );
        }
    }

    fn collect_keys(value: &serde_json::Value, keys: &mut Vec<String>) {
        if let serde_json::Value::Object(map) = value {
            for (k, v) in map {
                keys.push(k.clone());
                collect_keys(v, keys);
            }
        }
    }

    #[test]
    fn detections_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("detections.tsv");
        let detections = vec![
            Detection { key: "s1".into(), probability: 0.123456789012345, anomalous: false },
            Detection { key: "s2".into(), probability: 1.0 / 3.0, anomalous: true },
        ];
        let mut out = Vec::new();
        for d in &detections {
            writeln!(out, "{}\t{}\t{}", d.key, d.probability, u8::from(d.anomalous)).unwrap();
        }
        fs::write(&path, out).unwrap();
        let back = read_detections(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].probability, detections[0].probability);
        assert_eq!(back[1].probability, detections[1].probability);
        assert!(back[1].anomalous);

        fs::write(&path, "k\t0.5\n").unwrap();
        assert!(read_detections(&path).is_err());
        fs::write(&path, "").unwrap();
        assert!(read_detections(&path).is_err());
    }

    #[test]
    fn sweep_axis_values_parse_from_flags() {
        let cli = Cli::try_parse_from([
            "zerolog", "sweep", "--config", "run.toml", "--axis", "beta", "--values", "0.5,1,2",
        ])
        .unwrap();
        match cli.cmd {
            Cmd::Sweep(args) => {
                assert_eq!(args.axis, SweepAxis::Beta);
                assert_eq!(args.values, vec![0.5, 1.0, 2.0]);
            }
            _ => panic!("parsed the wrong command"),
        }
    }
}
