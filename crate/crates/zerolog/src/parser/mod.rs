//! Log parsing: masking/header-strip preprocessing, Drain template mining,
//! and session grouping.

mod drain;
mod io;
mod preprocess;
mod session;

pub use drain::{Drain, TemplateStore};
pub use io::{read_sessions, read_templates, write_sessions, write_templates};
pub use preprocess::{preprocess_line, MaskRule};
pub use session::{group_sessions, EventRecord, GroupStats, SessionSpec, SessionStrategy};

use crate::error::{Error, Result};

/// One raw input line. `line_no` is the 0-based position in the source file.
#[derive(Debug, Clone)]
pub struct RawLogLine {
    pub system_id: String,
    pub line_no: usize,
    pub text: String,
}

/// A template token: an invariant literal or a parameter position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    Lit(String),
    Wild,
}

impl Token {
    pub fn as_literal(&self) -> Option<&str> {
        match self {
            Token::Lit(s) => Some(s),
            Token::Wild => None,
        }
    }
}

impl std::fmt::Display for Token {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Token::Lit(s) => f.write_str(s),
            Token::Wild => f.write_str("<*>"),
        }
    }
}

/// A mined template. Ids are dense and assigned in first-seen order, which
/// keeps template numbering (and everything derived from it) reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct LogTemplate {
    pub id: u32,
    pub tokens: Vec<Token>,
    pub match_count: u64,
}

impl LogTemplate {
    pub fn wildcard_count(&self) -> usize {
        self.tokens.iter().filter(|t| matches!(t, Token::Wild)).count()
    }

    /// Render as the on-disk form: tokens joined by single spaces, `<*>` for
    /// parameter positions.
    pub fn render(&self) -> String {
        let parts: Vec<String> = self.tokens.iter().map(|t| t.to_string()).collect();
        parts.join(" ")
    }
}

/// One concrete line resolved against its template: the extracted parameter
/// strings, one per wildcard position.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedEvent {
    pub template_id: u32,
    pub parameters: Vec<String>,
}

/// Drain settings plus the preprocessing that runs before tree lookup.
#[derive(Debug, Clone)]
pub struct DrainConfig {
    /// Total tree depth; the first `tree_depth - 2` tokens route a line.
    pub tree_depth: usize,
    /// Merge threshold in (0, 1].
    pub similarity_threshold: f64,
    /// Maximum distinct children per routing node before overflow routing.
    pub max_children: usize,
    /// Applied in order to the stripped line before tokenization.
    pub masking_rules: Vec<MaskRule>,
    /// Leading whitespace tokens removed before masking (timestamp, host,
    /// severity and similar header fields).
    pub strip_tokens: usize,
}

impl Default for DrainConfig {
    fn default() -> Self {
        DrainConfig {
            tree_depth: 4,
            similarity_threshold: 0.5,
            max_children: 100,
            masking_rules: Vec::new(),
            strip_tokens: 0,
        }
    }
}

impl DrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tree_depth < 2 {
            return Err(Error::Config("tree_depth must be >= 2".into()));
        }
        if !(self.similarity_threshold > 0.0 && self.similarity_threshold <= 1.0) {
            return Err(Error::Config("similarity_threshold must be in (0, 1]".into()));
        }
        if self.max_children < 1 {
            return Err(Error::Config("max_children must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-session anomaly label. Target-domain sessions stay `Unlabeled` for the
/// whole of training; only evaluation ever sees their gold labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Normal,
    Anomalous,
    Unlabeled,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Normal => "0",
            Label::Anomalous => "1",
            Label::Unlabeled => "-",
        }
    }

    pub fn parse(s: &str) -> Result<Label> {
        match s {
            "0" => Ok(Label::Normal),
            "1" => Ok(Label::Anomalous),
            "-" => Ok(Label::Unlabeled),
            other => Err(Error::Input(format!("bad session label {other:?}"))),
        }
    }
}

/// An ordered event sequence, the unit of labeling and detection.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub key: String,
    pub event_ids: Vec<u32>,
    pub label: Label,
}
