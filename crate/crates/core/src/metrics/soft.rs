//! Soft constraints: length interval, citation emphasis and positioning type.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MetricError, PositioningStyle};
use crate::textops::{CitationIndex, SegmentedText};

pub const DEFAULT_TOLERANCE: f64 = 0.25;

/// Absolute slack on closed-interval comparisons.
const SLACK: f64 = 1e-9;

fn within(x: f64, lower: f64, upper: f64) -> bool {
    x >= lower - SLACK && x <= upper + SLACK
}

pub(crate) fn check_tolerance(t: f64) -> Result<(), MetricError> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(MetricError::Config(format!("tolerance must lie in (0, 1), got {t}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthCheck {
    pub draft_tokens: usize,
    pub gold_tokens: usize,
    pub tolerance: f64,
    pub lower: f64,
    pub upper: f64,
    pub pass: bool,
}

/// `x ∈ [(1−t)·T, (1+t)·T]`.
pub fn length_pass(x: usize, gold: usize, t: f64) -> bool {
    let g = gold as f64;
    within(x as f64, (1.0 - t) * g, (1.0 + t) * g)
}

pub fn length_check(draft: &SegmentedText, gold: &SegmentedText, t: f64) -> Result<LengthCheck, MetricError> {
    check_tolerance(t)?;
    if gold.total_tokens == 0 {
        return Err(MetricError::Validation("gold text is empty".into()));
    }
    let g = gold.total_tokens as f64;
    Ok(LengthCheck {
        draft_tokens: draft.total_tokens,
        gold_tokens: gold.total_tokens,
        tolerance: t,
        lower: (1.0 - t) * g,
        upper: (1.0 + t) * g,
        pass: length_pass(draft.total_tokens, gold.total_tokens, t),
    })
}

/// Share of a text's tokens attributed to each citation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EmphasisProfile {
    pub per_citation: BTreeMap<CitationIndex, f64>,
    pub total_tokens: usize,
}

impl EmphasisProfile {
    pub fn get(&self, idx: CitationIndex) -> f64 {
        self.per_citation.get(&idx).copied().unwrap_or(0.0)
    }
}

/// Attributes each sentence to the citations it carries, or to those of the
/// most recent citing sentence in the same paragraph. A sentence citing k
/// papers counts in full towards each of them.
pub fn emphasis_profile(text: &SegmentedText) -> EmphasisProfile {
    // Accumulate integer token counts and divide once, so the result does not
    // depend on summation order.
    let mut tokens: BTreeMap<CitationIndex, usize> = BTreeMap::new();
    for paragraph in &text.paragraphs {
        let mut current: &[CitationIndex] = &[];
        for sentence in &paragraph.sentences {
            if sentence.has_citation() {
                current = &sentence.cited_indices;
            }
            for &idx in current {
                *tokens.entry(idx).or_default() += sentence.token_count;
            }
        }
    }
    let total = text.total_tokens;
    let per_citation = if total == 0 {
        BTreeMap::new()
    } else {
        tokens.into_iter().map(|(k, v)| (k, v as f64 / total as f64)).collect()
    };
    EmphasisProfile {
        per_citation,
        total_tokens: total,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmphasisScore {
    pub per_citation_pass: BTreeMap<CitationIndex, bool>,
    pub mean: f64,
    /// Generated and gold shares for each gold index.
    pub generated: BTreeMap<CitationIndex, f64>,
    pub gold: BTreeMap<CitationIndex, f64>,
}

/// Scores `generated` against `gold`: a gold index passes when the generated
/// share lies within `[(1−t)·g, (1+t)·g]`. Indices the gold text never cites
/// are ignored.
pub fn emphasis_score(generated: &EmphasisProfile, gold: &EmphasisProfile, t: f64) -> Result<EmphasisScore, MetricError> {
    check_tolerance(t)?;
    if gold.per_citation.is_empty() {
        return Err(MetricError::Validation("gold emphasis profile has no citations".into()));
    }
    let per_citation_pass: BTreeMap<_, _> = gold
        .per_citation
        .iter()
        .map(|(&idx, &g)| (idx, within(generated.get(idx), (1.0 - t) * g, (1.0 + t) * g)))
        .collect();
    let passed = per_citation_pass.values().filter(|p| **p).count();
    Ok(EmphasisScore {
        mean: passed as f64 / per_citation_pass.len() as f64,
        per_citation_pass,
        generated: gold.per_citation.keys().map(|&k| (k, generated.get(k))).collect(),
        gold: gold.per_citation.clone(),
    })
}

pub fn positioning_type_match(detected: PositioningStyle, expected: PositioningStyle) -> bool {
    detected == expected
}
