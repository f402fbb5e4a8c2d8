//! Corpus containers, the evaluation-only gold handle, and the stratified
//! splitter.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::parser::{Label, Session, TemplateStore};
use crate::train::task::shuffle;

/// One system's sessions. Labels live on the sessions themselves; a corpus
/// meant for unsupervised use simply has every session Unlabeled.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub system: String,
    pub sessions: Vec<Session>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelCounts {
    pub normal: usize,
    pub anomalous: usize,
    pub unlabeled: usize,
}

impl Corpus {
    pub fn counts(&self) -> LabelCounts {
        let mut c = LabelCounts::default();
        for s in &self.sessions {
            match s.label {
                Label::Normal => c.normal += 1,
                Label::Anomalous => c.anomalous += 1,
                Label::Unlabeled => c.unlabeled += 1,
            }
        }
        c
    }
}

/// Everything one cross-system run consumes: a labeled source, an unlabeled
/// target, their template stores, and the target's gold labels locked behind
/// the evaluation-only handle.
#[derive(Debug)]
pub struct DataPair {
    pub source: Corpus,
    pub source_store: TemplateStore,
    pub target: Corpus,
    pub target_store: TemplateStore,
    pub gold: EvalGold,
}

/// The only object that may answer "is this target session anomalous".
/// Training code never receives one; every read is counted so a test can
/// prove that. Lookups are by session key.
#[derive(Debug)]
pub struct EvalGold {
    labels: BTreeMap<String, bool>,
    reads: Cell<u64>,
}

impl EvalGold {
    pub fn new(labels: BTreeMap<String, bool>) -> EvalGold {
        EvalGold { labels, reads: Cell::new(0) }
    }

    /// Collects the labeled sessions of a corpus into a gold handle.
    pub fn from_corpus(corpus: &Corpus) -> EvalGold {
        let mut labels = BTreeMap::new();
        for s in &corpus.sessions {
            match s.label {
                Label::Normal => {
                    labels.insert(s.key.clone(), false);
                }
                Label::Anomalous => {
                    labels.insert(s.key.clone(), true);
                }
                Label::Unlabeled => {}
            }
        }
        EvalGold::new(labels)
    }

    pub fn lookup(&self, key: &str) -> Option<bool> {
        self.reads.set(self.reads.get() + 1);
        self.labels.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// How many lookups have happened; the label-leak tripwire reads this.
    pub fn read_count(&self) -> u64 {
        self.reads.get()
    }

    /// (normal, anomalous) class sizes. Aggregate counts are report
    /// material, not per-session answers, so they bypass the read counter.
    pub fn class_counts(&self) -> (usize, usize) {
        let anomalous = self.labels.values().filter(|&&a| a).count();
        (self.labels.len() - anomalous, anomalous)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_label_map(path, &self.labels)
    }

    pub fn load(path: &Path) -> Result<EvalGold> {
        Ok(EvalGold::new(load_label_map(path)?))
    }
}

/// `<key>\t<0|1>` per line, sorted by key.
pub fn save_label_map(path: &Path, labels: &BTreeMap<String, bool>) -> Result<()> {
    let mut out = Vec::new();
    for (key, &anom) in labels {
        writeln!(out, "{key}\t{}", if anom { 1 } else { 0 }).expect("write to vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_label_map(path: &Path) -> Result<BTreeMap<String, bool>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Input(format!("{}:{}: {what}", path.display(), no + 1));
        let (key, v) = line.split_once('\t').ok_or_else(|| bad("missing tab"))?;
        let anom = match v {
            "0" => false,
            "1" => true,
            _ => return Err(bad("label must be 0 or 1")),
        };
        labels.insert(key.to_string(), anom);
    }
    Ok(labels)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct JoinStats {
    pub joined: usize,
    pub unmatched_dropped: usize,
}

/// Joins a key->anomalous map onto sessions; sessions without an entry are
/// dropped and counted. Zero joined sessions is an error, not an empty
/// result; it always means mismatched inputs.
pub fn join_labels(corpus: &Corpus, labels: &BTreeMap<String, bool>) -> Result<(Corpus, JoinStats)> {
    let mut stats = JoinStats::default();
    let mut sessions = Vec::with_capacity(corpus.sessions.len());
    for s in &corpus.sessions {
        match labels.get(&s.key) {
            Some(&anom) => {
                stats.joined += 1;
                sessions.push(Session {
                    key: s.key.clone(),
                    event_ids: s.event_ids.clone(),
                    label: if anom { Label::Anomalous } else { Label::Normal },
                });
            }
            None => stats.unmatched_dropped += 1,
        }
    }
    if sessions.is_empty() {
        return Err(Error::Join(format!(
            "no session key of {} matched any label entry ({} sessions, {} labels)",
            corpus.system,
            corpus.sessions.len(),
            labels.len()
        )));
    }
    Ok((Corpus { system: corpus.system.clone(), sessions }, stats))
}

/// Replaces every label with Unlabeled and hands back the originals behind
/// the gold interface. This is how a labeled corpus becomes a legal training
/// target.
pub fn strip_labels(corpus: &Corpus) -> (Corpus, EvalGold) {
    let gold = EvalGold::from_corpus(corpus);
    let stripped = Corpus {
        system: corpus.system.clone(),
        sessions: corpus
            .sessions
            .iter()
            .map(|s| Session {
                key: s.key.clone(),
                event_ids: s.event_ids.clone(),
                label: Label::Unlabeled,
            })
            .collect(),
    };
    (stripped, gold)
}

/// Label-stratified sampling without replacement into named splits. Every
/// label class present in the corpus is sampled at each split's fraction
/// (rounded), so class ratios carry over within one session. Sessions keep
/// their original corpus order inside each split; a single fraction of 1.0
/// reproduces the corpus exactly.
pub fn split_corpus(
    corpus: &Corpus,
    fractions: &[(String, f64)],
    seed: u64,
) -> Result<Vec<(String, Corpus)>> {
    if fractions.is_empty() {
        return Err(Error::Config("no split fractions given".into()));
    }
    let mut sum = 0.0;
    for (name, f) in fractions {
        if !f.is_finite() || *f <= 0.0 || *f > 1.0 {
            return Err(Error::Config(format!("split {name:?}: fraction {f} not in (0, 1]")));
        }
        sum += f;
    }
    if sum > 1.0 + 1e-9 {
        return Err(Error::Config(format!("split fractions sum to {sum}, must be <= 1")));
    }
    // Stratum order is fixed; all randomness comes from one seeded stream.
    let strata: [Label; 3] = [Label::Normal, Label::Anomalous, Label::Unlabeled];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<Vec<usize>> = vec![Vec::new(); fractions.len()];
    for label in strata {
        let mut idx: Vec<usize> = corpus
            .sessions
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == label)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            continue;
        }
        shuffle(&mut idx, &mut rng);
        let n = idx.len();
        let mut offset = 0usize;
        for (k, (name, f)) in fractions.iter().enumerate() {
            let take = ((f * n as f64).round() as usize).min(n - offset);
            if take == 0 {
                return Err(Error::Config(format!(
                    "split {name:?}: fraction {f} yields zero {} sessions",
                    label.as_str()
                )));
            }
            picked[k].extend(&idx[offset..offset + take]);
            offset += take;
        }
    }
    let mut out = Vec::with_capacity(fractions.len());
    for (k, (name, _)) in fractions.iter().enumerate() {
        let mut idx = std::mem::take(&mut picked[k]);
        idx.sort_unstable();
        let sessions: Vec<Session> = idx.iter().map(|&i| corpus.sessions[i].clone()).collect();
        out.push((name.clone(), Corpus { system: corpus.system.clone(), sessions }));
    }
    Ok(out)
}

/// Single-fraction convenience wrapper; fraction 1.0 is the identity.
pub fn take_fraction(corpus: &Corpus, fraction: f64, seed: u64) -> Result<Corpus> {
    let splits = split_corpus(corpus, &[("take".to_string(), fraction)], seed)?;
    Ok(splits.into_iter().next().expect("one split requested").1)
}
