use regex::Regex;

use super::DrainConfig;
use crate::error::{Error, Result};

/// One masking rule: every regex match in the stripped line body is replaced
/// by the mask token before tokenization.
#[derive(Debug, Clone)]
pub struct MaskRule {
    pub pattern: Regex,
    pub replacement: String,
}

impl MaskRule {
    pub fn new(pattern: &str, replacement: &str) -> Result<MaskRule> {
        let pattern = Regex::new(pattern)
            .map_err(|e| Error::Config(format!("bad mask pattern {pattern:?}: {e}")))?;
        Ok(MaskRule { pattern, replacement: replacement.to_string() })
    }
}

/// Strips `strip_tokens` leading header tokens, applies the masking rules in
/// order, and returns the whitespace-split content tokens. A line that
/// reduces to nothing is a degenerate line; callers may skip it.
pub fn preprocess_line(text: &str, config: &DrainConfig) -> Result<Vec<String>> {
    let body_tokens: Vec<&str> = text.split_whitespace().skip(config.strip_tokens).collect();
    if body_tokens.is_empty() {
        return Err(Error::DegenerateLine);
    }
    let mut body = body_tokens.join(" ");
    for rule in &config.masking_rules {
        body = rule.pattern.replace_all(&body, rule.replacement.as_str()).into_owned();
    }
    let tokens: Vec<String> = body.split_whitespace().map(|t| t.to_string()).collect();
    if tokens.is_empty() {
        return Err(Error::DegenerateLine);
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(strip: usize, masks: &[(&str, &str)]) -> DrainConfig {
        DrainConfig {
            strip_tokens: strip,
            masking_rules: masks.iter().map(|(p, r)| MaskRule::new(p, r).unwrap()).collect(),
            ..DrainConfig::default()
        }
    }

    #[test]
    fn direct_rule_application() {
        let c = cfg(0, &[(r"blk_-?\d+", "<ID>"), (r"\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3}", "<IP>")]);
        let toks = preprocess_line("Receiving block blk_123 src 10.0.0.1", &c).unwrap();
        assert_eq!(toks, vec!["Receiving", "block", "<ID>", "src", "<IP>"]);
    }

    #[test]
    fn empty_after_strip_is_degenerate() {
        let c = cfg(2, &[]);
        assert!(matches!(preprocess_line("a b", &c), Err(Error::DegenerateLine)));
        assert!(matches!(preprocess_line("   ", &cfg(0, &[])), Err(Error::DegenerateLine)));
    }

    // Expected token lists hand-derived by applying the same rule list on
    // paper, in order: blk ids, then ip:port, then hex, then bare integers.
    #[test]
    fn mixed_corpus_matches_scripted_regex_pass() {
        let c = cfg(
            1,
            &[
                (r"blk_-?\d+", "<ID>"),
                (r"\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3}(:\d+)?", "<IP>"),
                (r"0x[0-9a-fA-F]+", "<HEX>"),
                (r"\b\d+\b", "<NUM>"),
            ],
        );
        let lines = [
            "hdr Receiving block blk_8741 src 10.0.0.5:9090 dest 10.0.0.6",
            "hdr PacketResponder 2 for block blk_-33 terminating",
            "hdr error at 0xdeadBEEF code 404",
            "hdr got 17 packets from 192.168.0.1",
            "hdr verify blk_99 ok",
            "hdr plain words only here",
        ];
        let expect: [&[&str]; 6] = [
            &["Receiving", "block", "<ID>", "src", "<IP>", "dest", "<IP>"],
            &["PacketResponder", "<NUM>", "for", "block", "<ID>", "terminating"],
            &["error", "at", "<HEX>", "code", "<NUM>"],
            &["got", "<NUM>", "packets", "from", "<IP>"],
            &["verify", "<ID>", "ok"],
            &["plain", "words", "only", "here"],
        ];
        for (line, want) in lines.iter().zip(expect.iter()) {
            let got = preprocess_line(line, &c).unwrap();
            assert_eq!(got, *want, "line {line:?}");
        }
    }
}
