use std::collections::BTreeMap;

use super::{DrainConfig, LogTemplate, ParsedEvent, Token};
use crate::error::{Error, Result};

/// Routing key reserved for the overflow child of a full routing node.
const OVERFLOW: &str = "<*>";

#[derive(Debug, Default)]
struct Node {
    children: BTreeMap<String, Node>,
    /// Template ids, insertion-ordered (= ascending id) so similarity ties
    /// resolve to the lowest id.
    leaf: Vec<u32>,
}

/// Streaming Drain parser: a fixed-depth prefix tree that groups lines by
/// token count and their first `tree_depth - 2` tokens, then merges into the
/// most similar template at the leaf.
///
/// Single-writer by construction; [`Drain::freeze`] turns it into an
/// immutable [`TemplateStore`] for concurrent read-only lookup.
#[derive(Debug)]
pub struct Drain {
    cfg: DrainConfig,
    by_len: BTreeMap<usize, Node>,
    templates: Vec<LogTemplate>,
    lines_parsed: u64,
}

/// Positional similarity with wildcards counting as matches,
/// over the full token count.
fn similarity(template: &[Token], tokens: &[String]) -> f64 {
    debug_assert_eq!(template.len(), tokens.len());
    let hits = template
        .iter()
        .zip(tokens)
        .filter(|(t, tok)| match t {
            Token::Wild => true,
            Token::Lit(s) => s == *tok,
        })
        .count();
    hits as f64 / template.len() as f64
}

impl Drain {
    pub fn new(cfg: DrainConfig) -> Result<Drain> {
        cfg.validate()?;
        Ok(Drain { cfg, by_len: BTreeMap::new(), templates: Vec::new(), lines_parsed: 0 })
    }

    pub fn config(&self) -> &DrainConfig {
        &self.cfg
    }

    pub fn templates(&self) -> &[LogTemplate] {
        &self.templates
    }

    pub fn lines_parsed(&self) -> u64 {
        self.lines_parsed
    }

    /// Routes the token list and either merges it into the best-matching
    /// template (differing positions become wildcards) or mints a new one.
    /// Returns the template id. Never fails on a non-empty token list: a
    /// routing node that is full at `max_children` falls through its
    /// overflow child.
    pub fn parse_line(&mut self, tokens: &[String]) -> u32 {
        assert!(!tokens.is_empty(), "parse_line requires a non-empty token list");
        let levels = self.cfg.tree_depth.saturating_sub(2).min(tokens.len());
        let max_children = self.cfg.max_children;
        let mut node = self.by_len.entry(tokens.len()).or_default();
        for tok in tokens.iter().take(levels) {
            let key = if tok.as_str() != OVERFLOW
                && !node.children.contains_key(tok.as_str())
                && node.children.len() >= max_children
            {
                OVERFLOW
            } else {
                tok.as_str()
            };
            node = node.children.entry(key.to_string()).or_default();
        }

        let mut best: Option<(u32, f64)> = None;
        for &id in &node.leaf {
            let sim = similarity(&self.templates[id as usize].tokens, tokens);
            // Strict > keeps the first (lowest-id) candidate on ties.
            if best.map_or(true, |(_, b)| sim > b) {
                best = Some((id, sim));
            }
        }
        self.lines_parsed += 1;
        if let Some((id, sim)) = best {
            if sim >= self.cfg.similarity_threshold {
                let t = &mut self.templates[id as usize];
                for (slot, tok) in t.tokens.iter_mut().zip(tokens) {
                    if slot.as_literal().is_some_and(|s| s != tok) {
                        *slot = Token::Wild;
                    }
                }
                t.match_count += 1;
                return id;
            }
        }
        let id = self.templates.len() as u32;
        self.templates.push(LogTemplate {
            id,
            tokens: tokens.iter().map(|t| Token::Lit(t.clone())).collect(),
            match_count: 1,
        });
        node.leaf.push(id);
        id
    }

    /// Ends mining. The returned store is immutable and cheap to share.
    pub fn freeze(self) -> TemplateStore {
        TemplateStore { templates: self.templates }
    }
}

/// Immutable template table produced by [`Drain::freeze`].
#[derive(Debug, Clone)]
pub struct TemplateStore {
    templates: Vec<LogTemplate>,
}

impl TemplateStore {
    pub fn from_templates(templates: Vec<LogTemplate>) -> Result<TemplateStore> {
        for (i, t) in templates.iter().enumerate() {
            if t.id as usize != i {
                return Err(Error::Input(format!("template ids not dense: {} at {}", t.id, i)));
            }
            if t.tokens.is_empty() {
                return Err(Error::Input(format!("template {} has no tokens", t.id)));
            }
        }
        Ok(TemplateStore { templates })
    }

    pub fn get(&self, id: u32) -> Option<&LogTemplate> {
        self.templates.get(id as usize)
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LogTemplate> {
        self.templates.iter()
    }

    /// Resolves a line against its assigned template, pulling the concrete
    /// parameter strings out of the wildcard positions.
    pub fn extract_event(&self, template_id: u32, tokens: &[String]) -> Result<ParsedEvent> {
        let t = self
            .get(template_id)
            .ok_or_else(|| Error::Input(format!("unknown template id {template_id}")))?;
        if t.tokens.len() != tokens.len() {
            return Err(Error::Input(format!(
                "token count {} does not match template {} ({} tokens)",
                tokens.len(),
                template_id,
                t.tokens.len()
            )));
        }
        let parameters = t
            .tokens
            .iter()
            .zip(tokens)
            .filter(|(slot, _)| matches!(slot, Token::Wild))
            .map(|(_, tok)| tok.clone())
            .collect();
        Ok(ParsedEvent { template_id, parameters })
    }
}
