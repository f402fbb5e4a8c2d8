//! Run configuration. One TOML file drives every command; the CLI flags can
//! override only `seed`, `out` and `threshold`. Unknown keys are rejected at
//! every level so a typo fails the run instead of silently using a default.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{profiles, DatasetProfile, SyntheticSpec};
use crate::embed::EmbeddingConfig;
use crate::error::{Error, Result};
use crate::net::NetworkConfig;
use crate::parser::{DrainConfig, MaskRule, SessionSpec, SessionStrategy};
use crate::train::{Hyperparams, StopCriterion};

/// Global template-mining knobs shared by both systems. Masking and session
/// rules live on the per-system tables because they differ per dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParserConfig {
    pub tree_depth: usize,
    pub similarity_threshold: f64,
    pub max_children: usize,
}

impl Default for ParserConfig {
    fn default() -> Self {
        let d = DrainConfig::default();
        ParserConfig {
            tree_depth: d.tree_depth,
            similarity_threshold: d.similarity_threshold,
            max_children: d.max_children,
        }
    }
}

/// Session rule override, written as a tagged table:
/// `session = { key_regex = "blk_-?\\d+" }`,
/// `session = { fixed_count = 60 }` or
/// `session = { time_window = { seconds = 3600, stride = 3600 } }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SessionRule {
    KeyRegex(String),
    FixedCount(usize),
    TimeWindow { seconds: i64, stride: i64 },
}

/// One side of the transfer pair. `system` and `profile` are required when
/// the table is present; everything else falls back to the profile or to
/// files under the out directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// System id recorded in embedding keys and session keys.
    pub system: String,
    /// Dataset profile supplying strip/mask/session defaults:
    /// hdfs, bgl, openstack or synthetic.
    pub profile: String,
    /// Raw log. Defaults to source.log / target.log under the out directory,
    /// which is where the synth command writes.
    #[serde(default)]
    pub log: Option<PathBuf>,
    /// Further raw logs appended after `log` (OpenStack ships several files).
    #[serde(default)]
    pub extra_logs: Vec<PathBuf>,
    /// Label sidecar. HDFS: the block-id CSV. OpenStack: one anomalous
    /// instance id per line. Synthetic and custom profiles: a key\t0|1 map.
    /// BGL labels are inline, so a sidecar here is a config error.
    #[serde(default)]
    pub labels: Option<PathBuf>,
    /// Overrides the profile's leading header-token count.
    #[serde(default)]
    pub strip_tokens: Option<usize>,
    /// Overrides the profile's masking rules; pairs of [pattern, replacement].
    #[serde(default)]
    pub masks: Option<Vec<(String, String)>>,
    /// Overrides the profile's session rule.
    #[serde(default)]
    pub session: Option<SessionRule>,
}

impl SystemConfig {
    fn synth_side(system: &str) -> SystemConfig {
        SystemConfig {
            system: system.to_string(),
            profile: "synthetic".to_string(),
            log: None,
            extra_logs: Vec::new(),
            labels: None,
            strip_tokens: None,
            masks: None,
            session: None,
        }
    }

    pub fn profile(&self) -> Result<&'static DatasetProfile> {
        profiles::get(&self.profile)
    }

    /// Profile defaults, then the global parser knobs, then the per-system
    /// overrides.
    pub fn drain_config(&self, parser: &ParserConfig) -> Result<DrainConfig> {
        let mut cfg = self.profile()?.drain_config()?;
        cfg.tree_depth = parser.tree_depth;
        cfg.similarity_threshold = parser.similarity_threshold;
        cfg.max_children = parser.max_children;
        if let Some(n) = self.strip_tokens {
            cfg.strip_tokens = n;
        }
        if let Some(pairs) = &self.masks {
            cfg.masking_rules = pairs
                .iter()
                .map(|(pat, rep)| MaskRule::new(pat, rep))
                .collect::<Result<Vec<_>>>()?;
        }
        Ok(cfg)
    }

    pub fn session_spec(&self) -> Result<SessionSpec> {
        let spec = match &self.session {
            None => self.profile()?.session_spec(&self.system)?,
            Some(rule) => {
                let strategy = match rule {
                    SessionRule::KeyRegex(pat) => {
                        SessionStrategy::KeyRegex(regex::Regex::new(pat).map_err(|e| {
                            Error::Config(format!("bad session pattern {pat:?}: {e}"))
                        })?)
                    }
                    SessionRule::FixedCount(n) => SessionStrategy::FixedCount(*n),
                    SessionRule::TimeWindow { seconds, stride } => {
                        SessionStrategy::TimeWindow { seconds: *seconds, stride: *stride }
                    }
                };
                SessionSpec { strategy, system_id: self.system.clone() }
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master run seed; every internal stream is derived from it.
    pub seed: u64,
    /// Every artifact lands here. Relative paths in this file resolve
    /// against the file's own directory.
    pub out: PathBuf,
    /// Decision threshold on the anomaly probability.
    pub threshold: f64,
    /// Fraction of labeled source sessions used for training.
    pub source_fraction: f64,
    /// Fraction of unlabeled target sessions used for training. Evaluation
    /// always runs on the full target corpus.
    pub target_fraction: f64,
    /// Pretrained word vector table (token then floats, one per line).
    /// Absent: every token takes the seeded-hash fallback vector.
    pub vectors: Option<PathBuf>,
    pub source: SystemConfig,
    pub target: SystemConfig,
    pub parser: ParserConfig,
    pub synthetic: SyntheticSpec,
    pub embedding: EmbeddingConfig,
    pub network: NetworkConfig,
    pub hyperparams: Hyperparams,
    pub stop: StopCriterion,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            out: PathBuf::from("out"),
            threshold: 0.5,
            source_fraction: 1.0,
            target_fraction: 1.0,
            vectors: None,
            source: SystemConfig::synth_side("synth-src"),
            target: SystemConfig::synth_side("synth-tgt"),
            parser: ParserConfig::default(),
            synthetic: SyntheticSpec::default(),
            embedding: EmbeddingConfig::default(),
            network: NetworkConfig::default(),
            hyperparams: Hyperparams::default(),
            stop: StopCriterion::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Parses, resolves relative paths against the config directory and
    /// validates. The resolved form is what the manifest records.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.out);
        if let Some(v) = &mut self.vectors {
            resolve(base, v);
        }
        for side in [&mut self.source, &mut self.target] {
            if let Some(p) = &mut side.log {
                resolve(base, p);
            }
            for p in &mut side.extra_logs {
                resolve(base, p);
            }
            if let Some(p) = &mut side.labels {
                resolve(base, p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        for (name, f) in [
            ("source_fraction", self.source_fraction),
            ("target_fraction", self.target_fraction),
        ] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("{name} {f} outside (0, 1]")));
            }
        }
        if self.embedding.dimension == 0 {
            return Err(Error::Config("embedding.dimension must be positive".into()));
        }
        if self.embedding.dimension != self.network.input_dim {
            return Err(Error::Config(format!(
                "embedding.dimension {} does not match network.input_dim {}",
                self.embedding.dimension, self.network.input_dim
            )));
        }
        if self.parser.tree_depth < 3 {
            return Err(Error::Config(format!(
                "parser.tree_depth {} below the minimum of 3",
                self.parser.tree_depth
            )));
        }
        if !(self.parser.similarity_threshold > 0.0 && self.parser.similarity_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "parser.similarity_threshold {} outside (0, 1]",
                self.parser.similarity_threshold
            )));
        }
        if self.parser.max_children == 0 {
            return Err(Error::Config("parser.max_children must be at least 1".into()));
        }
        self.synthetic.validate()?;
        self.hyperparams.validate()?;
        self.stop.validate()?;
        for side in [&self.source, &self.target] {
            side.profile()?;
            side.drain_config(&self.parser)?;
            side.session_spec()?;
            if side.profile == "bgl" && side.labels.is_some() {
                return Err(Error::Config(
                    "bgl labels are inline; remove the labels sidecar".into(),
                ));
            }
        }
        if self.source.system == self.target.system {
            return Err(Error::Config(format!(
                "source and target share the system id {:?}",
                self.source.system
            )));
        }
        Ok(())
    }

    // Effective artifact paths. Inputs default to what the upstream command
    // writes, so the commands chain without any path plumbing in the config.

    pub fn source_log(&self) -> PathBuf {
        self.source.log.clone().unwrap_or_else(|| self.out.join("source.log"))
    }

    pub fn target_log(&self) -> PathBuf {
        self.target.log.clone().unwrap_or_else(|| self.out.join("target.log"))
    }

    /// Label sidecar for the source side. Synthetic profiles default to the
    /// map the synth command writes; real profiles must point at their own.
    pub fn source_labels(&self) -> Option<PathBuf> {
        if self.source.labels.is_some() {
            return self.source.labels.clone();
        }
        (self.source.profile == "synthetic").then(|| self.out.join("source-labels.tsv"))
    }

    pub fn target_labels(&self) -> Option<PathBuf> {
        if self.target.labels.is_some() {
            return self.target.labels.clone();
        }
        (self.target.profile == "synthetic").then(|| self.out.join("target-gold.tsv"))
    }

    /// Where parse writes the held-out target truth and eval reads it.
    pub fn target_gold(&self) -> PathBuf {
        self.out.join("target-gold.tsv")
    }

    pub fn templates_path(&self, side: &str) -> PathBuf {
        self.out.join(format!("{side}-templates.tsv"))
    }

    pub fn sessions_path(&self, side: &str) -> PathBuf {
        self.out.join(format!("{side}-sessions.tsv"))
    }

    pub fn embeddings_path(&self) -> PathBuf {
        self.out.join("embeddings.tsv")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.out.join("checkpoint.bin")
    }

    pub fn history_path(&self) -> PathBuf {
        self.out.join("history.tsv")
    }

    pub fn detections_path(&self) -> PathBuf {
        self.out.join("detections.tsv")
    }

    pub fn report_path(&self) -> PathBuf {
        self.out.join("report.txt")
    }
}
