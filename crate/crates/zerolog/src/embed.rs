//! Shared semantic embedding: every template from every system is mapped into
//! one vector space by aggregating pre-trained word vectors over its literal
//! tokens. Identical wording yields identical vectors regardless of which
//! system produced the template; that is the whole point.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::parser::{LogTemplate, TemplateStore};

/// Default seed for the out-of-vocabulary hash vectors ("zerolog!").
pub const DEFAULT_HASH_SEED: u64 = 0x7a65_726f_6c6f_6721;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Mean,
    TfIdfWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OovPolicy {
    /// Unknown tokens contribute a zero vector.
    Zero,
    /// Unknown tokens get a deterministic unit-norm vector hashed from the
    /// token text; distinct unknown words stay distinguishable.
    SeededHash,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingConfig {
    pub aggregation: Aggregation,
    pub oov_policy: OovPolicy,
    pub dimension: usize,
    /// Lowercase plus camelCase/snake_case splitting when set; raw tokens
    /// otherwise.
    pub normalize_tokens: bool,
    pub hash_seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            aggregation: Aggregation::Mean,
            oov_policy: OovPolicy::SeededHash,
            dimension: 300,
            normalize_tokens: true,
            hash_seed: DEFAULT_HASH_SEED,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadStats {
    pub rows: usize,
    pub skipped: usize,
}

/// Pre-trained word vectors, immutable once loaded.
#[derive(Debug, Clone)]
pub struct WordVectorTable {
    dimension: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

impl WordVectorTable {
    pub fn empty(dimension: usize) -> WordVectorTable {
        WordVectorTable { dimension, entries: BTreeMap::new() }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(token).map(|v| v.as_slice())
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(Error::Config(format!(
                "vector for {token:?} has {} components, table dimension is {}",
                vector.len(),
                self.dimension
            )));
        }
        if !vector.iter().all(|v| v.is_finite()) {
            return Err(Error::Config(format!("vector for {token:?} has non-finite components")));
        }
        self.entries.insert(token.to_string(), vector);
        Ok(())
    }

    /// Loads the common text format: `token v1 v2 ... vD`, one per line.
    /// Malformed rows are skipped and counted; a file where more than half
    /// the rows are malformed is rejected outright.
    pub fn load(path: &Path, dimension: usize) -> Result<(WordVectorTable, LoadStats)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table = WordVectorTable::empty(dimension);
        let mut stats = LoadStats::default();
        let mut total = 0usize;
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            total += 1;
            let mut parts = line.split_whitespace();
            let token = parts.next();
            let values: Option<Vec<f64>> =
                parts.map(|p| p.parse::<f64>().ok().filter(|v| v.is_finite())).collect();
            match (token, values) {
                (Some(tok), Some(vals)) if vals.len() == dimension => {
                    table.entries.insert(tok.to_string(), vals);
                    stats.rows += 1;
                }
                _ => stats.skipped += 1,
            }
        }
        if total > 0 && stats.skipped * 2 > total {
            return Err(Error::VectorFormat(format!(
                "{}: {} of {} rows malformed",
                path.display(),
                stats.skipped,
                total
            )));
        }
        if stats.rows == 0 {
            return Err(Error::EmptyTable(format!("{} has no valid rows", path.display())));
        }
        Ok((table, stats))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for (tok, vals) in &self.entries {
            let rendered: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{tok} {}", rendered.join(" ")).expect("write to vec");
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Lowercases and splits a code-like token at snake_case underscores,
/// camelCase boundaries and any other non-alphanumeric characters.
pub fn normalize_token(token: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut cur = String::new();
    let mut prev_lower_or_digit = false;
    for ch in token.chars() {
        if !ch.is_alphanumeric() {
            if !cur.is_empty() {
                parts.push(std::mem::take(&mut cur));
            }
            prev_lower_or_digit = false;
            continue;
        }
        if ch.is_uppercase() && prev_lower_or_digit && !cur.is_empty() {
            parts.push(std::mem::take(&mut cur));
        }
        prev_lower_or_digit = ch.is_lowercase() || ch.is_ascii_digit();
        cur.extend(ch.to_lowercase());
    }
    if !cur.is_empty() {
        parts.push(cur);
    }
    parts
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic unit-norm vector for an out-of-vocabulary token. Hand-rolled
/// hash plus splitmix stream so the result is identical across platforms.
pub fn oov_vector(token: &str, dimension: usize, seed: u64) -> Vec<f64> {
    let mut state = fnv1a64(token.as_bytes()) ^ seed;
    let mut v: Vec<f64> = (0..dimension)
        .map(|_| {
            let u = splitmix64(&mut state);
            // 53 uniform bits in [0, 1), then shifted to [-1, 1).
            (u >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    } else {
        v[0] = 1.0;
    }
    v
}

/// Document frequencies over templates-as-documents. Built from the source
/// corpus only; target wording must not steer any statistic that feeds
/// training beyond the adversarial pass itself.
#[derive(Debug, Clone)]
pub struct TemplateIdf {
    n_docs: usize,
    df: BTreeMap<String, usize>,
}

impl TemplateIdf {
    pub fn from_store(store: &TemplateStore, normalize: bool) -> TemplateIdf {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for t in store.iter() {
            let mut seen: Vec<String> = template_words(t, normalize);
            seen.sort();
            seen.dedup();
            for w in seen {
                *df.entry(w).or_insert(0) += 1;
            }
        }
        TemplateIdf { n_docs: store.len(), df }
    }

    /// idf(t) = ln((1+n)/(1+df)) + 1; unseen tokens get the df = 0 value.
    pub fn idf(&self, token: &str) -> f64 {
        let df = self.df.get(token).copied().unwrap_or(0);
        ((1 + self.n_docs) as f64 / (1 + df) as f64).ln() + 1.0
    }
}

fn template_words(template: &LogTemplate, normalize: bool) -> Vec<String> {
    let mut words = Vec::new();
    for tok in template.tokens.iter().filter_map(|t| t.as_literal()) {
        if normalize {
            words.extend(normalize_token(tok));
        } else {
            words.push(tok.to_string());
        }
    }
    words
}

/// Embeds one template: aggregates word vectors over its literal tokens
/// (wildcards skipped). Returns the vector and whether every word fell back
/// to the OOV policy.
pub fn embed_template(
    template: &LogTemplate,
    table: &WordVectorTable,
    config: &EmbeddingConfig,
    idf: Option<&TemplateIdf>,
) -> Result<(Vec<f64>, bool)> {
    if table.dimension() != config.dimension {
        return Err(Error::Config(format!(
            "embedding dimension {} does not match table dimension {}",
            config.dimension,
            table.dimension()
        )));
    }
    let words = template_words(template, config.normalize_tokens);
    let dim = config.dimension;
    if words.is_empty() {
        // All-wildcard degenerate template; flagged, not fatal.
        return Ok((vec![0.0; dim], true));
    }
    let mut vecs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(words.len());
    let mut any_known = false;
    for w in &words {
        let weight = match config.aggregation {
            Aggregation::Mean => 1.0,
            Aggregation::TfIdfWeighted => match idf {
                Some(i) => i.idf(w),
                None => {
                    return Err(Error::Config(
                        "tf_idf_weighted aggregation requires idf statistics".into(),
                    ))
                }
            },
        };
        let v = match table.get(w) {
            Some(v) => {
                any_known = true;
                v.to_vec()
            }
            None => match config.oov_policy {
                OovPolicy::Zero => vec![0.0; dim],
                OovPolicy::SeededHash => {
                    any_known = true;
                    oov_vector(w, dim, config.hash_seed)
                }
            },
        };
        vecs.push((weight, v));
    }
    let total: f64 = vecs.iter().map(|(w, _)| w).sum();
    let mut out = vec![0.0; dim];
    for (w, v) in &vecs {
        // Weights renormalized to sum 1; Mean is the uniform special case.
        let w = w / total;
        for (o, x) in out.iter_mut().zip(v) {
            *o += w * x;
        }
    }
    debug_assert!(out.iter().all(|v| v.is_finite()));
    Ok((out, !any_known))
}

/// Embeddings for the union of all systems' templates, keyed
/// `<system>:<template_id>`. The vector for a template depends only on its
/// wording, the table and the config, never on the system that produced it.
#[derive(Debug, Clone)]
pub struct EventEmbedding {
    dimension: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

impl EventEmbedding {
    pub fn key(system: &str, template_id: u32) -> String {
        format!("{system}:{template_id}")
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, system: &str, template_id: u32) -> Option<&[f64]> {
        self.entries.get(&Self::key(system, template_id)).map(|v| v.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Vec<f64>)> {
        self.entries.iter()
    }

    /// Export format: `<system>:<template_id>\t<v1> <v2> ... <vD>`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for (key, vals) in &self.entries {
            let rendered: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{key}\t{}", rendered.join(" ")).expect("write to vec");
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<EventEmbedding> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = BTreeMap::new();
        let mut dimension = None;
        for (no, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Input(format!("{}:{}: {what}", path.display(), no + 1));
            let (key, body) = line.split_once('\t').ok_or_else(|| bad("missing tab"))?;
            let vals: Vec<f64> = body
                .split(' ')
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| bad("bad component"))
                })
                .collect::<Result<_>>()?;
            match dimension {
                None => dimension = Some(vals.len()),
                Some(d) if d != vals.len() => return Err(bad("inconsistent dimension")),
                _ => {}
            }
            entries.insert(key.to_string(), vals);
        }
        let dimension =
            dimension.ok_or_else(|| Error::Input(format!("{} is empty", path.display())))?;
        Ok(EventEmbedding { dimension, entries })
    }
}

/// Embeds the union of all systems' templates against the single shared
/// table. Template stores must be frozen; id namespaces are kept disjoint by
/// system-prefixed keys.
pub fn build_global_embeddings(
    stores: &[(&str, &TemplateStore)],
    table: &WordVectorTable,
    config: &EmbeddingConfig,
    idf: Option<&TemplateIdf>,
) -> Result<EventEmbedding> {
    let mut entries = BTreeMap::new();
    for (system, store) in stores {
        for t in store.iter() {
            let (v, _) = embed_template(t, table, config, idf)?;
            entries.insert(EventEmbedding::key(system, t.id), v);
        }
    }
    Ok(EventEmbedding { dimension: config.dimension, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::Token;

    fn tmpl(id: u32, words: &[&str]) -> LogTemplate {
        LogTemplate {
            id,
            tokens: words.iter().map(|w| Token::Lit(w.to_string())).collect(),
            match_count: 1,
        }
    }

    fn basis_table() -> WordVectorTable {
        let mut t = WordVectorTable::empty(3);
        t.insert("a", vec![1.0, 0.0, 0.0]).unwrap();
        t.insert("b", vec![0.0, 1.0, 0.0]).unwrap();
        t.insert("c", vec![0.0, 0.0, 1.0]).unwrap();
        t
    }

    fn cfg(dim: usize) -> EmbeddingConfig {
        EmbeddingConfig { dimension: dim, ..EmbeddingConfig::default() }
    }

    #[test]
    fn single_token_is_identity() {
        let (v, oov) = embed_template(&tmpl(0, &["a"]), &basis_table(), &cfg(3), None).unwrap();
        assert_eq!(v, vec![1.0, 0.0, 0.0]);
        assert!(!oov);
    }

    #[test]
    fn mean_of_two_basis_vectors() {
        let (v, _) = embed_template(&tmpl(0, &["a", "b"]), &basis_table(), &cfg(3), None).unwrap();
        assert_eq!(v, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn repeated_token_mean_is_that_vector() {
        let (v, _) =
            embed_template(&tmpl(0, &["b", "b", "b"]), &basis_table(), &cfg(3), None).unwrap();
        assert_eq!(v, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn wildcards_are_skipped() {
        let t = LogTemplate {
            id: 0,
            tokens: vec![Token::Lit("a".into()), Token::Wild, Token::Lit("b".into())],
            match_count: 1,
        };
        let (v, _) = embed_template(&t, &basis_table(), &cfg(3), None).unwrap();
        assert_eq!(v, vec![0.5, 0.5, 0.0]);
    }

    // Frozen from a one-off scripted oracle: documents {a b}, {a c}, {a b c};
    // idf = ln((1+3)/(1+df)) + 1 gives a -> 1.0, b and c -> 1.2876820724517808;
    // weights for template [a b c] renormalize to
    // (0.27969179067408617, 0.36015410466295694, 0.36015410466295694).
    #[test]
    fn tfidf_weighted_mean_matches_oracle() {
        let store = TemplateStore::from_templates(vec![
            tmpl(0, &["a", "b"]),
            tmpl(1, &["a", "c"]),
            tmpl(2, &["a", "b", "c"]),
        ])
        .unwrap();
        let idf = TemplateIdf::from_store(&store, true);
        assert!((idf.idf("a") - 1.0).abs() < 1e-15);
        assert!((idf.idf("b") - 1.2876820724517808).abs() < 1e-15);
        assert!((idf.idf("zzz") - 2.386294361119891).abs() < 1e-15);

        let c = EmbeddingConfig { aggregation: Aggregation::TfIdfWeighted, ..cfg(3) };
        let (v, _) =
            embed_template(store.get(2).unwrap(), &basis_table(), &c, Some(&idf)).unwrap();
        let want = [0.27969179067408617, 0.36015410466295694, 0.36015410466295694];
        for (got, want) in v.iter().zip(want) {
            assert!((got - want).abs() < 1e-15, "{v:?}");
        }
        let wsum: f64 = v.iter().sum();
        assert!((wsum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_oov_under_zero_policy_flags_template() {
        let c = EmbeddingConfig { oov_policy: OovPolicy::Zero, ..cfg(3) };
        let (v, all_oov) = embed_template(&tmpl(0, &["nope"]), &basis_table(), &c, None).unwrap();
        assert_eq!(v, vec![0.0, 0.0, 0.0]);
        assert!(all_oov);
    }

    #[test]
    fn seeded_hash_is_deterministic_and_unit_norm() {
        let a = oov_vector("mystery", 16, DEFAULT_HASH_SEED);
        let b = oov_vector("mystery", 16, DEFAULT_HASH_SEED);
        assert_eq!(a, b);
        let n: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
        assert_ne!(a, oov_vector("mysterz", 16, DEFAULT_HASH_SEED));
        assert_ne!(a, oov_vector("mystery", 16, 1));
    }

    #[test]
    fn normalizer_splits_code_like_tokens() {
        assert_eq!(normalize_token("PacketResponder"), vec!["packet", "responder"]);
        assert_eq!(normalize_token("block_id"), vec!["block", "id"]);
        assert_eq!(normalize_token("dfs.DataNode$Handler"), vec!["dfs", "data", "node", "handler"]);
        assert_eq!(normalize_token("<NUM>"), vec!["num"]);
        assert_eq!(normalize_token("...").len(), 0);
        assert_eq!(normalize_token("HTTPServer"), vec!["httpserver"]);
    }

    #[test]
    fn shared_space_ignores_system_identity() {
        let s1 = TemplateStore::from_templates(vec![tmpl(0, &["a", "b"])]).unwrap();
        let s2 = TemplateStore::from_templates(vec![tmpl(0, &["a", "b"])]).unwrap();
        let emb = build_global_embeddings(
            &[("sys1", &s1), ("sys2", &s2)],
            &basis_table(),
            &cfg(3),
            None,
        )
        .unwrap();
        assert_eq!(emb.len(), 2);
        assert_eq!(emb.get("sys1", 0), emb.get("sys2", 0));
    }

    #[test]
    fn union_counts_and_round_trip() {
        let s1 = TemplateStore::from_templates(vec![
            tmpl(0, &["a"]),
            tmpl(1, &["b"]),
            tmpl(2, &["c"]),
            tmpl(3, &["a", "c"]),
            tmpl(4, &["b", "c"]),
        ])
        .unwrap();
        let s2 = TemplateStore::from_templates(vec![
            tmpl(0, &["a", "b"]),
            tmpl(1, &["frobnicate"]),
            tmpl(2, &["c", "c"]),
        ])
        .unwrap();
        let emb =
            build_global_embeddings(&[("s", &s1), ("t", &s2)], &basis_table(), &cfg(3), None)
                .unwrap();
        assert_eq!(emb.len(), 8);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.tsv");
        emb.save(&path).unwrap();
        let back = EventEmbedding::load(&path).unwrap();
        assert_eq!(back.len(), 8);
        for (k, v) in emb.iter() {
            assert_eq!(back.entries.get(k), Some(v), "{k}");
        }
        // Byte-stable rerun.
        let once = fs::read(&path).unwrap();
        emb.save(&path).unwrap();
        assert_eq!(once, fs::read(&path).unwrap());
    }

    #[test]
    fn empty_target_store_is_fine() {
        let s1 = TemplateStore::from_templates(vec![tmpl(0, &["a"])]).unwrap();
        let s2 = TemplateStore::from_templates(vec![]).unwrap();
        let emb =
            build_global_embeddings(&[("s", &s1), ("t", &s2)], &basis_table(), &cfg(3), None)
                .unwrap();
        assert_eq!(emb.len(), 1);
    }

    #[test]
    fn table_load_skips_malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.txt");
        let mut body = String::new();
        for i in 0..9 {
            body.push_str(&format!("tok{i} 0.5 -0.25 1.5\n"));
        }
        body.push_str("broken 0.5 oops 1.0\n");
        fs::write(&path, body).unwrap();
        let (table, stats) = WordVectorTable::load(&path, 3).unwrap();
        assert_eq!(table.len(), 9);
        assert_eq!(stats.skipped, 1);

        fs::write(&path, "only 1.0 2.0\nalso 3.0\n").unwrap();
        assert!(matches!(WordVectorTable::load(&path, 3), Err(Error::VectorFormat(_))));
        fs::write(&path, "\n").unwrap();
        assert!(matches!(WordVectorTable::load(&path, 3), Err(Error::EmptyTable(_))));
    }

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.txt");
        let t = basis_table();
        t.save(&path).unwrap();
        let (back, _) = WordVectorTable::load(&path, 3).unwrap();
        assert_eq!(back.get("a"), t.get("a"));
        assert_eq!(back.get("b"), t.get("b"));
        assert_eq!(back.get("c"), t.get("c"));
    }
}
