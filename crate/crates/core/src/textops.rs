//! Paragraph, sentence, token and citation-marker extraction.
//!
//! Every metric in the crate is defined relative to this segmentation, so the
//! rules here are deliberately simple and fully deterministic:
//!
//! * paragraphs are separated by line breaks (one or more, blank lines included);
//! * a sentence ends at `.`, `?` or `!` (optionally followed by closing quotes or
//!   a closing parenthesis) when the next non-space character is an uppercase
//!   letter or `[`, unless the terminated word is a known abbreviation;
//! * a token is a maximal run of non-whitespace characters;
//! * a citation marker is `[` digits (`,` spaces digits)* `]`.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// One-based index of a cited paper inside a citation set.
pub type CitationIndex = u32;

static MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[(\d+(?:,\s*\d+)*)\]").unwrap());

/// Words that end with a period without ending the sentence.
const ABBREVIATIONS: &[&str] = &[
    "al.", "e.g.", "i.e.", "cf.", "vs.", "fig.", "figs.", "eq.", "eqs.", "sec.", "secs.",
    "tab.", "no.", "nos.", "dr.", "mr.", "ms.", "prof.", "approx.", "resp.", "viz.", "ch.",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub token_count: usize,
    /// Indices from the sentence's markers, deduplicated, first-occurrence order.
    pub cited_indices: Vec<CitationIndex>,
}

impl Sentence {
    fn new(text: &str) -> Self {
        let mut cited_indices = Vec::new();
        for idx in extract_citations(text) {
            if !cited_indices.contains(&idx) {
                cited_indices.push(idx);
            }
        }
        Self {
            text: text.to_string(),
            token_count: count_tokens(text),
            cited_indices,
        }
    }

    pub fn has_citation(&self) -> bool {
        !self.cited_indices.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub text: String,
    pub sentences: Vec<Sentence>,
}

impl Paragraph {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.token_count).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentedText {
    pub raw: String,
    pub paragraphs: Vec<Paragraph>,
    pub total_tokens: usize,
}

impl SegmentedText {
    pub fn is_empty(&self) -> bool {
        self.paragraphs.is_empty()
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.paragraphs.iter().flat_map(|p| p.sentences.iter())
    }

    /// Distinct cited indices across the whole text, in first-occurrence order.
    pub fn cited_set(&self) -> Vec<CitationIndex> {
        let mut out = Vec::new();
        for idx in self.sentences().flat_map(|s| s.cited_indices.iter().copied()) {
            if !out.contains(&idx) {
                out.push(idx);
            }
        }
        out
    }

    /// Canonical text form: sentences joined by one space, paragraphs by a blank line.
    pub fn render(&self) -> String {
        self.paragraphs
            .iter()
            .map(|p| {
                p.sentences
                    .iter()
                    .map(|s| s.text.as_str())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Every index occurrence inside numeric bracket markers, in text order.
pub fn extract_citations(text: &str) -> Vec<CitationIndex> {
    let mut out = Vec::new();
    for cap in MARKER.captures_iter(text) {
        for part in cap[1].split(',') {
            // Digit runs too long for u32 are not citation numbers.
            if let Ok(idx) = part.trim().parse::<CitationIndex>() {
                out.push(idx);
            }
        }
    }
    out
}

/// Rewrites every numeric marker through `map`. Indices without a mapping are
/// left untouched.
pub fn remap_citations(text: &str, map: impl Fn(CitationIndex) -> Option<CitationIndex>) -> String {
    MARKER
        .replace_all(text, |cap: &regex::Captures<'_>| {
            let parts: Vec<String> = cap[1]
                .split(',')
                .map(|p| {
                    let trimmed = p.trim();
                    let lead = &p[..p.len() - p.trim_start().len()];
                    match trimmed.parse::<CitationIndex>().ok().and_then(&map) {
                        Some(new) => format!("{lead}{new}"),
                        None => p.to_string(),
                    }
                })
                .collect();
            format!("[{}]", parts.join(","))
        })
        .into_owned()
}

pub fn segment(text: &str) -> SegmentedText {
    let paragraphs: Vec<Paragraph> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|p| Paragraph {
            text: p.to_string(),
            sentences: split_sentences(p).into_iter().map(Sentence::new).collect(),
        })
        .collect();
    let total_tokens = paragraphs.iter().map(Paragraph::token_count).sum();
    SegmentedText {
        raw: text.to_string(),
        paragraphs,
        total_tokens,
    }
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | '\u{201d}' | '\u{2019}')
}

fn is_abbreviation(paragraph: &str, terminator_end: usize) -> bool {
    let word_start = paragraph[..terminator_end]
        .rfind(char::is_whitespace)
        .map_or(0, |i| i + 1);
    let word = paragraph[word_start..terminator_end].to_lowercase();
    let word = word.trim_start_matches(['(', '"']);
    ABBREVIATIONS.contains(&word)
}

/// Splits one paragraph (no line breaks) into trimmed sentences.
fn split_sentences(paragraph: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = paragraph.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if matches!(c, '.' | '?' | '!') {
            let mut j = i + 1;
            while j < chars.len() && is_closer(chars[j].1) {
                j += 1;
            }
            let end = chars.get(j).map_or(paragraph.len(), |&(p, _)| p);
            let mut k = j;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            let boundary = k > j
                && k < chars.len()
                && (chars[k].1.is_uppercase() || chars[k].1 == '[')
                && !(c == '.' && j == i + 1 && is_abbreviation(paragraph, pos + 1));
            if boundary {
                let sentence = paragraph[start..end].trim();
                if !sentence.is_empty() {
                    out.push(sentence);
                }
                start = chars[k].0;
                i = k;
                continue;
            }
        }
        i += 1;
    }
    let tail = paragraph[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}
