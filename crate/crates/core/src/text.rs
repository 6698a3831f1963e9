//! Instruction tokenization shared by the policy features and the oracle's
//! typing vocabulary.

use alloc::string::String;
use alloc::vec::Vec;

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "as", "at", "for", "in", "into", "is", "it", "my", "of", "the", "then",
    "to", "with", "your",
];

/// Lowercased alphanumeric runs, in order, duplicates kept.
pub fn tokens(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in s.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(core::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Distinct tokens in first-occurrence order. This is the typing vocabulary
/// for `type_text` candidates.
pub fn vocabulary(s: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for t in tokens(s) {
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

pub fn is_stopword(tok: &str) -> bool {
    STOPWORDS.contains(&tok)
}

/// Tokens minus stopwords.
pub fn content_tokens(s: &str) -> Vec<String> {
    tokens(s).into_iter().filter(|t| !is_stopword(t)).collect()
}

/// Tokens that appear inside double quotes.
pub fn quoted_tokens(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    for (i, part) in s.split('"').enumerate() {
        if i % 2 == 1 {
            out.extend(tokens(part));
        }
    }
    out
}

/// Normalize free text for comparison: lowercase, whitespace runs collapsed,
/// trimmed.
pub fn normalize_ws(s: &str) -> String {
    let mut out = String::new();
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        for ch in word.chars() {
            out.extend(ch.to_lowercase());
        }
    }
    out
}
