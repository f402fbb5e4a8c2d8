//! Shipped per-dataset preprocessing defaults. Everything here is a default,
//! not a format contract: strip counts, masks, and session strategies are all
//! user-overridable in run config.

use regex::Regex;

use crate::error::{Error, Result};
use crate::parser::{DrainConfig, MaskRule, SessionSpec, SessionStrategy};

#[derive(Debug, Clone, Copy)]
pub enum ProfileSession {
    KeyRegex(&'static str),
    FixedCount(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct DatasetProfile {
    pub name: &'static str,
    /// Leading header tokens (timestamp, host, severity, component) removed
    /// before masking.
    pub strip_tokens: usize,
    pub masks: &'static [(&'static str, &'static str)],
    pub session: ProfileSession,
}

const IP: &str = r"\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3}(:\d+)?";
const NUM: &str = r"\b\d+\b";
const UUID: &str = r"[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}";

/// `<Date> <Time> <Pid> <Level> <Component>: <Content>`; sessions are block
/// ids, which appear inside the content.
pub const HDFS: DatasetProfile = DatasetProfile {
    name: "hdfs",
    strip_tokens: 5,
    masks: &[(r"blk_-?\d+", "<ID>"), (IP, "<IP>"), (NUM, "<NUM>")],
    session: ProfileSession::KeyRegex(r"blk_-?\d+"),
};

/// `<AlertTag> <Epoch> <Date> <Node> <Time> <NodeRepeat> RAS <Component>
/// <Level> <Content>`; the alert tag and epoch are read by the loader before
/// stripping. Windowing has no published value; 60-event chunks are the
/// documented default.
pub const BGL: DatasetProfile = DatasetProfile {
    name: "bgl",
    strip_tokens: 9,
    masks: &[(r"0x[0-9a-fA-F]+", "<HEX>"), (NUM, "<NUM>")],
    session: ProfileSession::FixedCount(60),
};

/// `<Logrecord> <Date> <Time> <Pid> <Level> <Component> <Content>`; sessions
/// are the bracketed instance ids, extracted via the capture group so the
/// key is the bare uuid.
pub const OPENSTACK: DatasetProfile = DatasetProfile {
    name: "openstack",
    strip_tokens: 6,
    masks: &[
        (r"req-[0-9a-f-]+", "<REQ>"),
        (UUID, "<UUID>"),
        (IP, "<IP>"),
        (NUM, "<NUM>"),
    ],
    session: ProfileSession::KeyRegex(r"\[instance: ([0-9a-f-]{36})"),
};

/// The generator's own output: `<epoch> <sess_key> <body> c=<n>`. The
/// counter suffix is masked; the hex-ish volatile token inside the body is
/// deliberately left alone so template mining must infer that parameter
/// position itself.
pub const SYNTHETIC: DatasetProfile = DatasetProfile {
    name: "synthetic",
    strip_tokens: 2,
    masks: &[(r"c=\d+", "c=<NUM>")],
    session: ProfileSession::KeyRegex(r"sess_\d+"),
};

pub const ALL: &[&DatasetProfile] = &[&HDFS, &BGL, &OPENSTACK, &SYNTHETIC];

pub fn get(name: &str) -> Result<&'static DatasetProfile> {
    ALL.iter()
        .find(|p| p.name == name)
        .copied()
        .ok_or_else(|| Error::Config(format!("unknown dataset profile {name:?}")))
}

impl DatasetProfile {
    pub fn drain_config(&self) -> Result<DrainConfig> {
        let mut rules = Vec::with_capacity(self.masks.len());
        for (pat, rep) in self.masks {
            rules.push(MaskRule::new(pat, rep)?);
        }
        Ok(DrainConfig {
            masking_rules: rules,
            strip_tokens: self.strip_tokens,
            ..DrainConfig::default()
        })
    }

    pub fn session_spec(&self, system_id: &str) -> Result<SessionSpec> {
        let strategy = match self.session {
            ProfileSession::KeyRegex(pat) => SessionStrategy::KeyRegex(
                Regex::new(pat)
                    .map_err(|e| Error::Config(format!("bad session pattern {pat:?}: {e}")))?,
            ),
            ProfileSession::FixedCount(n) => SessionStrategy::FixedCount(n),
        };
        let spec = SessionSpec { strategy, system_id: system_id.to_string() };
        spec.validate()?;
        Ok(spec)
    }
}
