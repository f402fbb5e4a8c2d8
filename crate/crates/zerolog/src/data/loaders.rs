//! Corpus loaders: one streaming ingest core (preprocess, template mining,
//! grouping) plus the per-dataset line conventions. Real corpora are read
//! from local paths in their published plain-text formats; nothing here
//! downloads anything.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use super::corpus::{join_labels, Corpus, DataPair};
use super::profiles;
use super::synth::SyntheticPair;
use crate::error::{Error, Result};
use crate::parser::{
    group_sessions, preprocess_line, Drain, DrainConfig, EventRecord, Label, SessionSpec,
    SessionStrategy, TemplateStore,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub lines_read: usize,
    /// Lines that reduced to zero tokens after stripping.
    pub degenerate_skipped: usize,
    /// Lines whose header fields did not parse (BGL tag/timestamp).
    pub malformed_skipped: usize,
    /// Lines with no session key match.
    pub dropped_no_key: usize,
    /// Sessions dropped by a label join for want of a label entry.
    pub unmatched_dropped: usize,
}

/// Streaming ingest state. Lines go in one at a time; out come sessions, the
/// frozen template store, and the skip accounting.
pub struct Ingest {
    drain: Drain,
    events: Vec<EventRecord>,
    report: IngestReport,
    next_line_no: usize,
}

impl Ingest {
    pub fn new(cfg: DrainConfig) -> Result<Ingest> {
        Ok(Ingest {
            drain: Drain::new(cfg)?,
            events: Vec::new(),
            report: IngestReport::default(),
            next_line_no: 0,
        })
    }

    pub fn push(&mut self, raw: &str, timestamp: Option<i64>, line_label: Option<bool>) {
        self.report.lines_read += 1;
        let line_no = self.next_line_no;
        self.next_line_no += 1;
        match preprocess_line(raw, self.drain.config()) {
            Ok(tokens) => {
                let template_id = self.drain.parse_line(&tokens);
                self.events.push(EventRecord {
                    line_no,
                    raw: raw.to_string(),
                    timestamp,
                    template_id,
                    line_label,
                });
            }
            Err(_) => self.report.degenerate_skipped += 1,
        }
    }

    pub fn skip_malformed(&mut self) {
        self.report.lines_read += 1;
        self.report.malformed_skipped += 1;
    }

    pub fn finish(
        mut self,
        spec: &SessionSpec,
    ) -> Result<(Corpus, TemplateStore, IngestReport)> {
        let (sessions, gstats) = group_sessions(&self.events, spec)?;
        self.report.dropped_no_key = gstats.dropped_no_key;
        let corpus = Corpus { system: spec.system_id.clone(), sessions };
        Ok((corpus, self.drain.freeze(), self.report))
    }
}

/// Byte-wise line reader: published corpora contain occasional non-UTF8
/// bytes, which are replaced rather than fatal.
fn for_each_line(path: &Path, mut f: impl FnMut(&str)) -> Result<()> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Ok(());
        }
        let line = String::from_utf8_lossy(&buf);
        f(line.trim_end_matches(['\n', '\r']));
    }
}

/// Override-aware file ingest for the command line: the caller supplies the
/// effective drain config and session spec (profile defaults plus any
/// per-system overrides). `tagged_lines` selects the alert-tag line shape
/// (field 0 is `-` or an alert kind, field 1 epoch seconds) used by
/// BGL-style corpora; plain lines carry no metadata.
pub fn ingest_files(
    logs: &[PathBuf],
    cfg: DrainConfig,
    spec: &SessionSpec,
    tagged_lines: bool,
) -> Result<(Corpus, TemplateStore, IngestReport)> {
    let mut ingest = Ingest::new(cfg)?;
    for log in logs {
        for_each_line(log, |line| {
            if !tagged_lines {
                ingest.push(line, None, None);
                return;
            }
            let mut fields = line.split_whitespace();
            let (Some(tag), Some(ts)) = (fields.next(), fields.next()) else {
                ingest.skip_malformed();
                return;
            };
            let Ok(ts) = ts.parse::<i64>() else {
                ingest.skip_malformed();
                return;
            };
            ingest.push(line, Some(ts), Some(tag != "-"));
        })?;
    }
    ingest.finish(spec)
}

/// Reads a one-key-per-line list and labels every session: listed keys
/// become Anomalous, everything else Normal.
pub fn label_by_key_list(corpus: &mut Corpus, list: &Path) -> Result<()> {
    let mut ids: BTreeMap<String, bool> = BTreeMap::new();
    for_each_line(list, |line| {
        let id = line.trim();
        if !id.is_empty() {
            ids.insert(id.to_string(), true);
        }
    })?;
    for s in &mut corpus.sessions {
        s.label = if ids.contains_key(&s.key) { Label::Anomalous } else { Label::Normal };
    }
    Ok(())
}

/// Generic ingest over in-memory lines, no per-line metadata. The synthetic
/// path and tests use this.
pub fn ingest_lines<'a, I>(
    lines: I,
    cfg: DrainConfig,
    spec: &SessionSpec,
) -> Result<(Corpus, TemplateStore, IngestReport)>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut ingest = Ingest::new(cfg)?;
    for line in lines {
        ingest.push(line, None, None);
    }
    ingest.finish(spec)
}

/// The HDFS anomaly table: `BlockId,Label` with Label in {Normal, Anomaly},
/// case-insensitive, optional header row.
pub fn read_hdfs_labels(path: &Path) -> Result<BTreeMap<String, bool>> {
    let mut labels = BTreeMap::new();
    let mut row = 0usize;
    let mut parse_err = None;
    for_each_line(path, |line| {
        row += 1;
        let line = line.trim();
        if line.is_empty() || parse_err.is_some() {
            return;
        }
        let Some((id, label)) = line.split_once(',') else {
            parse_err = Some(format!("{}:{row}: missing comma", path.display()));
            return;
        };
        let id = id.trim();
        let anom = match label.trim() {
            l if l.eq_ignore_ascii_case("anomaly") => true,
            l if l.eq_ignore_ascii_case("normal") => false,
            _ if row == 1 => return,
            other => {
                parse_err = Some(format!("{}:{row}: bad label {other:?}", path.display()));
                return;
            }
        };
        labels.insert(id.to_string(), anom);
    })?;
    if let Some(msg) = parse_err {
        return Err(Error::Input(msg));
    }
    if labels.is_empty() {
        return Err(Error::Input(format!("{}: no label rows", path.display())));
    }
    Ok(labels)
}

/// Block-keyed sessions labeled by the anomaly table. Sessions whose block
/// id has no table entry are dropped and counted; a join that matches
/// nothing at all is an error.
pub fn load_hdfs(
    log: &Path,
    label_table: &Path,
) -> Result<(Corpus, TemplateStore, IngestReport)> {
    let profile = &profiles::HDFS;
    let mut ingest = Ingest::new(profile.drain_config()?)?;
    for_each_line(log, |line| ingest.push(line, None, None))?;
    let (corpus, store, mut report) = ingest.finish(&profile.session_spec("hdfs")?)?;
    let labels = read_hdfs_labels(label_table)?;
    let (corpus, jstats) = join_labels(&corpus, &labels)?;
    report.unmatched_dropped = jstats.unmatched_dropped;
    Ok((corpus, store, report))
}

/// Alert-tagged lines: field 0 is `-` for normal, anything else is an alert;
/// field 1 is the epoch timestamp. Lines missing either are skipped and
/// counted. Windowing is caller-chosen; 60-event chunks are the shipped
/// default.
pub fn load_bgl(
    log: &Path,
    spec: &SessionSpec,
) -> Result<(Corpus, TemplateStore, IngestReport)> {
    ingest_files(&[log.to_path_buf()], profiles::BGL.drain_config()?, spec, true)
}

pub fn bgl_default_spec() -> Result<SessionSpec> {
    profiles::BGL.session_spec("bgl")
}

/// Instance-keyed sessions across one or more service log files, read in the
/// order given. The label file lists anomalous instance ids one per line;
/// with it, every session gets Normal or Anomalous; without it, sessions
/// stay Unlabeled.
pub fn load_openstack(
    logs: &[&Path],
    anomalous_instances: Option<&Path>,
) -> Result<(Corpus, TemplateStore, IngestReport)> {
    let profile = &profiles::OPENSTACK;
    let mut ingest = Ingest::new(profile.drain_config()?)?;
    for log in logs {
        for_each_line(log, |line| ingest.push(line, None, None))?;
    }
    let (mut corpus, store, report) = ingest.finish(&profile.session_spec("openstack")?)?;
    if let Some(path) = anomalous_instances {
        label_by_key_list(&mut corpus, path)?;
    }
    Ok((corpus, store, report))
}

/// Parses a generated pair end to end: both systems go through the same
/// preprocessing, mining and grouping as any real corpus, source labels are
/// joined on, and the target keeps only its gold handle.
pub fn parse_synthetic_pair(pair: SyntheticPair) -> Result<DataPair> {
    let profile = &profiles::SYNTHETIC;
    let (source, source_store, _) = ingest_lines(
        pair.source_lines.iter().map(String::as_str),
        profile.drain_config()?,
        &profile.session_spec("synth-src")?,
    )?;
    let (source, _) = join_labels(&source, &pair.source_labels)?;
    let (target, target_store, _) = ingest_lines(
        pair.target_lines.iter().map(String::as_str),
        profile.drain_config()?,
        &profile.session_spec("synth-tgt")?,
    )?;
    Ok(DataPair { source, source_store, target, target_store, gold: pair.target_gold })
}

/// Convenience for corpora already on disk as raw line files with a named
/// profile, optionally joined against a label map (`key\t0|1`).
pub fn load_profiled(
    log: &Path,
    profile_name: &str,
    system_id: &str,
    label_map: Option<&Path>,
) -> Result<(Corpus, TemplateStore, IngestReport)> {
    let profile = profiles::get(profile_name)?;
    let spec = profile.session_spec(system_id)?;
    if let SessionStrategy::TimeWindow { .. } = spec.strategy {
        return Err(Error::Config("profiled loading does not extract timestamps".into()));
    }
    let mut ingest = Ingest::new(profile.drain_config()?)?;
    for_each_line(log, |line| ingest.push(line, None, None))?;
    let (corpus, store, mut report) = ingest.finish(&spec)?;
    let corpus = match label_map {
        Some(path) => {
            let labels = super::corpus::load_label_map(path)?;
            let (joined, jstats) = join_labels(&corpus, &labels)?;
            report.unmatched_dropped = jstats.unmatched_dropped;
            joined
        }
        None => corpus,
    };
    Ok((corpus, store, report))
}
