//! Per-draft evaluation report and its text serialization for the feedback writer.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::corpus::{CitationSet, PaperRecord};
use crate::judge::Judge;
use crate::metrics::{
    self, CitationVerification, CoherenceResult, EmphasisScore, LengthCheck, PositioningResult, PositioningStyle,
    RatioResult,
};
use crate::textops::{segment, CitationIndex};

/// Score columns derived from a report. The first eight form the standard
/// table; the last two are the alternative views of coherence and
/// positioning ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    Hallucination,
    Missing,
    Coherence,
    Positioning,
    Length,
    Emphasis,
    PositioningType,
    PositioningRatio,
    CoherenceRatio,
    PositioningRatioPass,
}

impl Criterion {
    pub const ALL: [Criterion; 10] = [
        Criterion::Hallucination,
        Criterion::Missing,
        Criterion::Coherence,
        Criterion::Positioning,
        Criterion::Length,
        Criterion::Emphasis,
        Criterion::PositioningType,
        Criterion::PositioningRatio,
        Criterion::CoherenceRatio,
        Criterion::PositioningRatioPass,
    ];

    /// Four hard constraints followed by four soft ones.
    pub const STANDARD: [Criterion; 8] = [
        Criterion::Hallucination,
        Criterion::Missing,
        Criterion::Coherence,
        Criterion::Positioning,
        Criterion::Length,
        Criterion::Emphasis,
        Criterion::PositioningType,
        Criterion::PositioningRatio,
    ];

    /// Criteria tracked between consecutive iterations.
    pub const DELTA: [Criterion; 6] = [
        Criterion::CoherenceRatio,
        Criterion::Emphasis,
        Criterion::PositioningRatio,
        Criterion::Length,
        Criterion::Missing,
        Criterion::Hallucination,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Hallucination => "hallucination",
            Criterion::Missing => "missing",
            Criterion::Coherence => "coherence",
            Criterion::Positioning => "positioning",
            Criterion::Length => "length",
            Criterion::Emphasis => "emphasis",
            Criterion::PositioningType => "positioning-type",
            Criterion::PositioningRatio => "positioning-ratio",
            Criterion::CoherenceRatio => "coherence-ratio",
            Criterion::PositioningRatioPass => "positioning-ratio-pass",
        }
    }

    pub fn is_hard(self) -> bool {
        matches!(
            self,
            Criterion::Hallucination | Criterion::Missing | Criterion::Coherence | Criterion::Positioning
        )
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown criterion `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub iteration: usize,
    pub citation: CitationVerification,
    pub coherence: CoherenceResult,
    pub positioning: PositioningResult,
    pub length: LengthCheck,
    pub emphasis: EmphasisScore,
    pub type_match: bool,
    pub justifications: BTreeMap<Criterion, String>,
    pub complete: bool,
}

impl EvaluationReport {
    /// Every criterion as a number in `[0, 1]`; pass/fail criteria are 0 or 1.
    pub fn scores(&self) -> BTreeMap<Criterion, f64> {
        let b = |x: bool| if x { 1.0 } else { 0.0 };
        Criterion::ALL
            .into_iter()
            .map(|c| {
                let v = match c {
                    Criterion::Hallucination => b(self.citation.hallucination_pass()),
                    Criterion::Missing => b(self.citation.missing_pass()),
                    Criterion::Coherence => b(self.coherence.passes),
                    Criterion::Positioning => b(self.positioning.exists),
                    Criterion::Length => b(self.length.pass),
                    Criterion::Emphasis => self.emphasis.mean,
                    Criterion::PositioningType => b(self.type_match),
                    Criterion::PositioningRatio => self.positioning.ratio.ratio,
                    Criterion::CoherenceRatio => self.coherence.coherence_ratio,
                    Criterion::PositioningRatioPass => b(self.positioning.ratio.ratio == 1.0),
                };
                (c, v)
            })
            .collect()
    }

    pub fn hard_pass(&self) -> bool {
        self.citation.passes() && self.coherence.passes && self.positioning.exists
    }

    /// Judge failures across coherence and positioning checks.
    pub fn failures(&self) -> usize {
        self.coherence.failures() + self.positioning.failures()
    }
}

/// What a draft is evaluated against at one iteration.
#[derive(Debug, Clone)]
pub struct EvalTarget<'a> {
    pub set: &'a CitationSet,
    /// Papers the generator was given; verification and coherence use only these.
    pub provided: &'a BTreeSet<CitationIndex>,
    pub expected_style: PositioningStyle,
    pub tolerance: f64,
}

fn list(indices: impl IntoIterator<Item = CitationIndex>) -> String {
    let v: Vec<String> = indices.into_iter().map(|i| format!("[{i}]")).collect();
    if v.is_empty() {
        "none".into()
    } else {
        v.join(", ")
    }
}

/// Runs every metric on one draft. Length and emphasis always compare against
/// the full gold text.
pub fn evaluate_draft(
    iteration: usize,
    draft: &str,
    target: &EvalTarget<'_>,
    judge: &Judge,
) -> Result<EvaluationReport, PipelineError> {
    let doc = segment(draft);
    let gold = segment(&target.set.gold_related_work);
    let citation = metrics::verify_citations(&doc, target.provided)?;
    let cited: BTreeMap<CitationIndex, PaperRecord> = target
        .set
        .cited
        .iter()
        .filter(|(k, _)| target.provided.contains(k))
        .map(|(k, v)| (*k, v.clone()))
        .collect();
    let coherence = metrics::coherence(&doc, &cited, judge);
    let positioning = if doc.is_empty() {
        PositioningResult {
            exists: false,
            detected_type: PositioningStyle::NoPositioning,
            expected: target.expected_style,
            type_match: false,
            confident: true,
            reasoning: "The draft is empty.".into(),
            error: None,
            ratio: RatioResult {
                style: target.expected_style,
                checks: Vec::new(),
                ratio: 0.0,
                fallback: false,
            },
        }
    } else {
        metrics::positioning(&doc, target.expected_style, judge)?
    };
    let length = metrics::length_check(&doc, &gold, target.tolerance)?;
    let emphasis = metrics::emphasis_score(
        &metrics::emphasis_profile(&doc),
        &metrics::emphasis_profile(&gold),
        target.tolerance,
    )?;

    let mut justifications = BTreeMap::new();
    justifications.insert(
        Criterion::Hallucination,
        format!("Cited papers not provided: {}.", list(citation.hallucinated_indices.iter().copied())),
    );
    justifications.insert(
        Criterion::Missing,
        format!("Provided papers not cited: {}.", list(citation.missing_indices.iter().copied())),
    );
    let negative = coherence.pairs.iter().find(|p| p.entailed == Some(false));
    justifications.insert(
        Criterion::Coherence,
        match negative {
            Some(p) => format!("[{}] does not support \"{}\": {}", p.citation_index, p.sentence, p.reasoning),
            None => format!(
                "{} of {} citation pairs judged entailed.",
                coherence.pairs.iter().filter(|p| p.entailed == Some(true)).count(),
                coherence.pairs.len()
            ),
        },
    );
    justifications.insert(Criterion::Positioning, positioning.reasoning.clone());
    justifications.insert(
        Criterion::Length,
        format!(
            "{} tokens against a range of {:.2} to {:.2}.",
            length.draft_tokens, length.lower, length.upper
        ),
    );
    justifications.insert(
        Criterion::Emphasis,
        format!(
            "Emphasis within range for {} of {} gold citations.",
            emphasis.per_citation_pass.values().filter(|p| **p).count(),
            emphasis.per_citation_pass.len()
        ),
    );
    justifications.insert(
        Criterion::PositioningType,
        format!(
            "Detected {} positioning, expected {}.",
            positioning.detected_type, positioning.expected
        ),
    );
    let ratio = &positioning.ratio;
    justifications.insert(
        Criterion::PositioningRatio,
        format!(
            "{} of {} checks positive for {} positioning.",
            ratio.checks.iter().filter(|c| c.verdict == Some(true)).count(),
            ratio.checks.len(),
            ratio.style
        ),
    );

    let complete = coherence.complete() && positioning.failures() == 0;
    Ok(EvaluationReport {
        iteration,
        type_match: positioning.type_match,
        citation,
        coherence,
        positioning,
        length,
        emphasis,
        justifications,
        complete,
    })
}

fn style_phrase(style: PositioningStyle) -> &'static str {
    match style {
        PositioningStyle::PerParagraph => "the contribution is stated in each paragraph",
        PositioningStyle::FinalParagraph => "the contribution is stated in a final summary paragraph",
        PositioningStyle::NoPositioning => "no contribution statement",
    }
}

/// The report as plain text, in the five groups the feedback prompt lists.
pub fn report_text(report: &EvaluationReport) -> String {
    let mut out = String::new();
    let c = &report.citation;
    let _ = writeln!(
        out,
        "(1) Missed papers: {}. Hallucinated papers: {}.",
        list(c.missing_indices.iter().copied()),
        list(c.hallucinated_indices.iter().copied())
    );
    let l = &report.length;
    let verdict = if l.pass {
        "within the expected range"
    } else if (l.draft_tokens as f64) < l.lower {
        "too short"
    } else {
        "too long"
    };
    let _ = writeln!(
        out,
        "(2) Length: the draft has {} tokens; the expected range is {:.0} to {:.0} tokens, so it is {}.",
        l.draft_tokens,
        l.lower.ceil(),
        l.upper.floor(),
        verdict
    );
    let _ = writeln!(out, "(3) Citation emphasis (share of the text attributed to each paper):");
    let t = l.tolerance;
    for (idx, pass) in &report.emphasis.per_citation_pass {
        let generated = report.emphasis.generated.get(idx).copied().unwrap_or(0.0);
        let gold = report.emphasis.gold.get(idx).copied().unwrap_or(0.0);
        let status = if *pass {
            "adequate"
        } else if generated < (1.0 - t) * gold {
            "too little"
        } else {
            "too much"
        };
        let _ = writeln!(
            out,
            "- [{idx}]: {generated:.3}, expected {:.3} to {:.3}: {status}",
            (1.0 - t) * gold,
            (1.0 + t) * gold
        );
    }
    let incoherent: Vec<_> = report.coherence.pairs.iter().filter(|p| p.entailed == Some(false)).collect();
    if incoherent.is_empty() {
        let _ = writeln!(out, "(4) Sentences lacking coherence: none.");
    } else {
        let _ = writeln!(out, "(4) Sentences lacking coherence:");
        for p in incoherent {
            let _ = writeln!(out, "- \"{}\" is not supported by paper [{}].", p.sentence, p.citation_index);
        }
    }
    let pos = &report.positioning;
    let _ = write!(
        out,
        "(5) Intended contribution type: {}. Draft's contribution type: {}. Share of paragraphs meeting the intended type: {:.2}.",
        style_phrase(pos.expected),
        style_phrase(pos.detected_type),
        pos.ratio.ratio
    );
    out
}

/// Rule-based feedback used when the feedback model is unavailable.
pub fn fallback_feedback(report: &EvaluationReport) -> String {
    let mut parts = Vec::new();
    let c = &report.citation;
    if !c.missing_indices.is_empty() {
        parts.push(format!("Cite the missing papers {}.", list(c.missing_indices.iter().copied())));
    }
    if !c.hallucinated_indices.is_empty() {
        parts.push(format!(
            "Remove citations to papers that were not provided: {}.",
            list(c.hallucinated_indices.iter().copied())
        ));
    }
    if !report.length.pass {
        let target = report.length.gold_tokens;
        if (report.length.draft_tokens as f64) < report.length.lower {
            parts.push(format!("Expand the section towards about {target} tokens."));
        } else {
            parts.push(format!("Shorten the section towards about {target} tokens."));
        }
    }
    let off: Vec<CitationIndex> = report
        .emphasis
        .per_citation_pass
        .iter()
        .filter(|(_, p)| !**p)
        .map(|(i, _)| *i)
        .collect();
    if !off.is_empty() {
        parts.push(format!("Rebalance the discussion of papers {}.", list(off)));
    }
    let incoherent = report.coherence.incoherent_sentences();
    if !incoherent.is_empty() {
        parts.push(format!(
            "Rewrite {} sentence(s) whose claims the cited paper does not support.",
            incoherent.len()
        ));
    }
    if !report.type_match || report.positioning.ratio.ratio < 1.0 {
        parts.push(format!(
            "Make sure {}.",
            style_phrase(report.positioning.expected)
        ));
    }
    if parts.is_empty() {
        "The draft meets every criterion; maintain the current draft.".into()
    } else {
        parts.join(" ")
    }
}
