//! Tokenization shared by matching, dedup and the mock embedding.

use std::collections::BTreeSet;

/// Built-in English stopwords: articles, copulas, pronouns and common prepositions.
pub const STOPWORDS: [&str; 35] = [
    "a", "an", "the", // articles
    "is", "am", "are", "was", "were", "be", "been", "being", // copulas
    "i", "me", "my", "you", "your", "he", "him", "his", "she", "her", "it", "its", "we", "our",
    "they", "them", "their", // pronouns
    "of", "in", "on", "at", "to", "for", "with", // prepositions
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.contains(&token)
}

/// Lowercase, split on non-alphanumerics, drop empty tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Lowercased alphanumeric tokens that are not stopwords, in text order.
pub fn content_words(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| !is_stopword(t))
        .collect()
}

pub fn content_word_set(text: &str) -> BTreeSet<String> {
    content_words(text).into_iter().collect()
}

/// Jaccard similarity; two empty sets score 0.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

pub const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |hash, &b| {
        (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Trim, lowercase and collapse internal whitespace.
pub fn normalize_phrase(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Replace line breaks so a value fits on a single injected line.
pub(crate) fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}
