//! The header is written by hand; this keeps it honest against the exports.

use std::collections::BTreeSet;
use std::path::Path;

fn names(text: &str, pattern: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for chunk in text.split(pattern).skip(1) {
        let name: String = format!("{pattern}{}", chunk)
            .chars()
            .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
            .collect();
        out.insert(name);
    }
    out
}

#[test]
fn header_declares_exactly_the_exported_functions() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(root.join("include/zerolog.h")).unwrap();
    let source = std::fs::read_to_string(root.join("src/lib.rs")).unwrap();

    let mut exported = BTreeSet::new();
    for item in source.split("#[no_mangle]").skip(1) {
        let fn_name = item
            .split("fn ")
            .nth(1)
            .and_then(|rest| rest.split(['(', '<']).next())
            .map(str::trim)
            .unwrap_or_default();
        exported.insert(fn_name.to_string());
    }
    // Every zl_ identifier followed by ( in the header is a declaration or a
    // doc reference; strip trailing punctuation and compare as sets.
    let declared: BTreeSet<String> = names(&header, "zl_")
        .into_iter()
        .filter(|n| header.contains(&format!("{n}(")))
        .collect();

    assert_eq!(declared, exported, "header and exports diverged");
    assert!(header.contains("ZL_OK = 0"));
    assert!(header.contains("ZL_INPUT = 2"));
    assert!(header.contains("ZL_NUMERIC = 3"));
    assert!(header.contains("ZL_NULL_ARGUMENT = 4"));
    assert!(header.contains("ZL_INVALID_UTF8 = 5"));
    assert!(header.contains("ZL_INTERNAL = 6"));
}
