//! Hard constraints: citation verification, coherence and positioning.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{MetricError, PositioningStyle};
use crate::corpus::PaperRecord;
use crate::judge::prompts::{
    coherence_prompt, positioning_direct_prompt, positioning_pairwise_prompt, positioning_type_prompt,
};
use crate::judge::{AnswerDomain, Judge, RenderedPrompt};
use crate::par;
use crate::textops::{CitationIndex, SegmentedText};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitationVerification {
    pub missing_ratio: f64,
    pub hallucination_ratio: f64,
    pub missing_indices: BTreeSet<CitationIndex>,
    pub hallucinated_indices: BTreeSet<CitationIndex>,
}

impl CitationVerification {
    pub fn missing_pass(&self) -> bool {
        self.missing_indices.is_empty()
    }

    pub fn hallucination_pass(&self) -> bool {
        self.hallucinated_indices.is_empty()
    }

    pub fn passes(&self) -> bool {
        self.missing_pass() && self.hallucination_pass()
    }
}

pub fn verify_citations(
    draft: &SegmentedText,
    provided: &BTreeSet<CitationIndex>,
) -> Result<CitationVerification, MetricError> {
    if provided.is_empty() {
        return Err(MetricError::Config("provided citation set is empty".into()));
    }
    let cited: BTreeSet<CitationIndex> = draft.cited_set().into_iter().collect();
    let missing_indices: BTreeSet<_> = provided.difference(&cited).copied().collect();
    let hallucinated_indices: BTreeSet<_> = cited.difference(provided).copied().collect();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(CitationVerification {
        missing_ratio: ratio(missing_indices.len(), provided.len()),
        hallucination_ratio: ratio(hallucinated_indices.len(), cited.len()),
        missing_indices,
        hallucinated_indices,
    })
}

/// One (citation sentence, cited paper) entailment check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairVerdict {
    /// Position of the sentence in the draft, counting across paragraphs.
    pub sentence_position: usize,
    pub sentence: String,
    pub citation_index: CitationIndex,
    /// `None` when the judge could not be reached.
    pub entailed: Option<bool>,
    pub confident: bool,
    pub reasoning: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceResult {
    pub pairs: Vec<PairVerdict>,
    /// Pairs citing an index outside the provided set; not judged.
    pub skipped: Vec<(usize, CitationIndex)>,
    pub coherence_ratio: f64,
    pub passes: bool,
}

impl CoherenceResult {
    pub fn failures(&self) -> usize {
        self.pairs.iter().filter(|p| p.entailed.is_none()).count()
    }

    pub fn complete(&self) -> bool {
        self.failures() == 0
    }

    /// Sentences with at least one non-entailed citation, in draft order.
    pub fn incoherent_sentences(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for p in &self.pairs {
            if p.entailed == Some(false) && out.last() != Some(&p.sentence.as_str()) {
                out.push(&p.sentence);
            }
        }
        out
    }

    pub(crate) fn from_pairs(pairs: Vec<PairVerdict>, skipped: Vec<(usize, CitationIndex)>) -> Self {
        let judged = pairs.iter().filter(|p| p.entailed.is_some()).count();
        let entailed = pairs.iter().filter(|p| p.entailed == Some(true)).count();
        let coherence_ratio = if judged == 0 { 0.0 } else { entailed as f64 / judged as f64 };
        Self {
            pairs,
            skipped,
            coherence_ratio,
            passes: judged > 0 && entailed == judged,
        }
    }
}

/// Asks the judge, mapping a binary verdict to `Some(yes)`, or `None` plus the error.
fn ask_binary(judge: &Judge, prompt: &RenderedPrompt) -> (Option<bool>, bool, String, Option<String>) {
    match judge.ask(prompt, &AnswerDomain::BINARY) {
        Ok(v) => (Some(v.is("yes")), v.confident, v.reasoning().to_string(), None),
        Err(e) => (None, false, String::new(), Some(e.to_string())),
    }
}

/// Checks every (sentence, index) pair whose index is in `cited` against that
/// paper's abstract and introduction. Only sentences that literally carry the
/// marker are checked. A draft with no judgeable pair scores 0 and fails.
pub fn coherence(draft: &SegmentedText, cited: &BTreeMap<CitationIndex, PaperRecord>, judge: &Judge) -> CoherenceResult {
    let mut work = Vec::new();
    let mut skipped = Vec::new();
    for (pos, sentence) in draft.sentences().enumerate() {
        for &idx in &sentence.cited_indices {
            match cited.get(&idx) {
                Some(paper) => work.push((pos, sentence.text.as_str(), idx, paper)),
                None => skipped.push((pos, idx)),
            }
        }
    }
    let pairs = par::map(&work, judge.parallelism(), |&(pos, text, idx, paper)| {
        let prompt = coherence_prompt(&paper.context(), text, idx);
        let (entailed, confident, reasoning, error) = ask_binary(judge, &prompt);
        PairVerdict {
            sentence_position: pos,
            sentence: text.to_string(),
            citation_index: idx,
            entailed,
            confident,
            reasoning,
            error,
        }
    });
    CoherenceResult::from_pairs(pairs, skipped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParagraphCheck {
    /// Index of the paragraph being checked (the context paragraph for pairwise checks).
    pub paragraph: usize,
    pub verdict: Option<bool>,
    pub reasoning: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioResult {
    pub style: PositioningStyle,
    pub checks: Vec<ParagraphCheck>,
    pub ratio: f64,
    /// A single-paragraph draft under the final-paragraph style was checked directly.
    pub fallback: bool,
}

impl RatioResult {
    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| c.verdict.is_none()).count()
    }
}

/// Share of paragraphs that carry the positioning the style asks for.
///
/// Per-paragraph style checks each paragraph on its own. Final-paragraph style
/// checks whether the last paragraph addresses each earlier one; with only one
/// paragraph that paragraph is checked directly instead.
pub fn positioning_ratio(draft: &SegmentedText, style: PositioningStyle, judge: &Judge) -> Result<RatioResult, MetricError> {
    if draft.is_empty() {
        return Err(MetricError::Validation("draft has no paragraphs".into()));
    }
    let paragraphs: Vec<&str> = draft.paragraphs.iter().map(|p| p.text.as_str()).collect();
    let n = paragraphs.len();
    let (prompts, fallback): (Vec<(usize, RenderedPrompt)>, bool) = match style {
        PositioningStyle::NoPositioning => {
            return Err(MetricError::Config("positioning ratio needs style 1 or 2".into()))
        }
        PositioningStyle::PerParagraph => (
            paragraphs.iter().enumerate().map(|(i, p)| (i, positioning_direct_prompt(p))).collect(),
            false,
        ),
        PositioningStyle::FinalParagraph if n == 1 => (vec![(0, positioning_direct_prompt(paragraphs[0]))], true),
        PositioningStyle::FinalParagraph => (
            paragraphs[..n - 1]
                .iter()
                .enumerate()
                .map(|(i, p)| (i, positioning_pairwise_prompt(p, paragraphs[n - 1])))
                .collect(),
            false,
        ),
    };
    let checks = par::map(&prompts, judge.parallelism(), |(i, prompt)| {
        let (verdict, _, reasoning, error) = ask_binary(judge, prompt);
        ParagraphCheck {
            paragraph: *i,
            verdict,
            reasoning,
            error,
        }
    });
    let judged = checks.iter().filter(|c| c.verdict.is_some()).count();
    let positive = checks.iter().filter(|c| c.verdict == Some(true)).count();
    Ok(RatioResult {
        style,
        ratio: if judged == 0 { 0.0 } else { positive as f64 / judged as f64 },
        checks,
        fallback,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositioningResult {
    pub exists: bool,
    pub detected_type: PositioningStyle,
    pub expected: PositioningStyle,
    pub type_match: bool,
    /// The type vote had a strict majority.
    pub confident: bool,
    pub reasoning: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Ratio measured for the expected style.
    pub ratio: RatioResult,
}

impl PositioningResult {
    pub fn failures(&self) -> usize {
        usize::from(self.error.is_some()) + self.ratio.failures()
    }
}

/// Detects the positioning type of the whole draft and measures the ratio for
/// the `expected` style. If the type judge is unreachable the draft is
/// treated as having no positioning and the error is recorded.
pub fn positioning(draft: &SegmentedText, expected: PositioningStyle, judge: &Judge) -> Result<PositioningResult, MetricError> {
    if draft.is_empty() {
        return Err(MetricError::Validation("draft has no paragraphs".into()));
    }
    let ratio = positioning_ratio(draft, expected, judge)?;
    let (detected_type, confident, reasoning, error) =
        match judge.ask(&positioning_type_prompt(draft.raw.trim()), &AnswerDomain::POSITIONING) {
            Ok(v) => (
                PositioningStyle::from_answer(&v.final_answer).unwrap_or(PositioningStyle::NoPositioning),
                v.confident,
                v.reasoning().to_string(),
                None,
            ),
            Err(e) => (PositioningStyle::NoPositioning, false, String::new(), Some(e.to_string())),
        };
    Ok(PositioningResult {
        exists: detected_type != PositioningStyle::NoPositioning,
        detected_type,
        expected,
        type_match: detected_type == expected,
        confident,
        reasoning,
        error,
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::judge::{StubJudge, TaskId};
    use crate::textops::segment;

    fn paper(id: &str) -> PaperRecord {
        PaperRecord {
            id: id.into(),
            title: format!("Title {id}"),
            abstract_text: format!("Abstract {id}."),
            introduction: format!("Intro {id}."),
        }
    }

    fn cited(n: u32) -> BTreeMap<CitationIndex, PaperRecord> {
        (1..=n).map(|i| (i, paper(&format!("p{i}")))).collect()
    }

    #[test]
    fn verification_examples() {
        let provided: BTreeSet<_> = (1..=5).collect();
        let v = verify_citations(&segment("A [1, 2]. B [3]. C [6]."), &provided).unwrap();
        assert_eq!(v.missing_ratio, 0.4);
        assert_eq!(v.hallucination_ratio, 0.25);
        assert_eq!(v.hallucinated_indices, BTreeSet::from([6]));
        let v = verify_citations(&segment("A [1, 2, 3, 4, 5]."), &provided).unwrap();
        assert!(v.passes());
        let v = verify_citations(&segment("Nothing cited."), &provided).unwrap();
        assert_eq!((v.missing_ratio, v.hallucination_ratio), (1.0, 0.0));
        assert!(verify_citations(&segment("x"), &BTreeSet::new()).is_err());
    }

    #[test]
    fn coherence_ratio_from_scripted_pairs() {
        let draft = segment("One [1]. Two [2]. Three [3]. Four [4]. Ghost [9].");
        let map = cited(4);
        let bad = coherence_prompt(&map[&3].context(), "Three [3].", 3);
        let judge = StubJudge::new("yes").script(&bad, ["no", "no", "yes"]).build();
        let r = coherence(&draft, &map, &judge);
        assert_eq!(r.pairs.len(), 4);
        assert_eq!(r.skipped, vec![(4, 9)]);
        assert_eq!(r.coherence_ratio, 0.75);
        assert!(!r.passes);
        assert_eq!(r.incoherent_sentences(), vec!["Three [3]."]);
    }

    #[test]
    fn all_yes_passes_and_failures_are_excluded() {
        let draft = segment("One [1, 2]. Two [2].");
        let map = cited(2);
        let judge = StubJudge::new("yes").build();
        let r = coherence(&draft, &map, &judge);
        assert_eq!(r.pairs.len(), 3);
        assert!(r.passes && r.coherence_ratio == 1.0 && r.complete());

        let broken = coherence_prompt(&map[&2].context(), "Two [2].", 2);
        let judge = StubJudge::new("yes").fail(&broken).build();
        let r = coherence(&draft, &map, &judge);
        assert_eq!(r.failures(), 1);
        assert_eq!(r.coherence_ratio, 1.0);
        assert!(!r.complete());
    }

    #[test]
    fn no_pairs_scores_zero() {
        let judge = StubJudge::new("yes").build();
        let r = coherence(&segment("Nothing cited."), &cited(2), &judge);
        assert_eq!((r.coherence_ratio, r.passes), (0.0, false));
    }

    #[test]
    fn per_paragraph_ratio() {
        let draft = segment("P one.\nP two.\nP three.\nP four.");
        let judge = StubJudge::new("yes")
            .script(&positioning_direct_prompt("P three."), ["no"])
            .build();
        let r = positioning_ratio(&draft, PositioningStyle::PerParagraph, &judge).unwrap();
        assert_eq!(r.ratio, 0.75);
        assert_eq!(r.checks.len(), 4);
    }

    #[test]
    fn final_paragraph_ratio_and_fallback() {
        let draft = segment("Ctx a.\nCtx b.\nCtx c.\nSummary.");
        let judge = StubJudge::new("yes")
            .script(&positioning_pairwise_prompt("Ctx b.", "Summary."), ["no"])
            .build();
        let r = positioning_ratio(&draft, PositioningStyle::FinalParagraph, &judge).unwrap();
        assert_eq!(r.checks.len(), 3);
        assert!((r.ratio - 2.0 / 3.0).abs() < 1e-15);

        let single = segment("Only one paragraph.");
        let judge = StubJudge::new("no")
            .script(&positioning_direct_prompt("Only one paragraph."), ["yes"])
            .build();
        let r = positioning_ratio(&single, PositioningStyle::FinalParagraph, &judge).unwrap();
        assert!(r.fallback);
        assert_eq!(r.ratio, 1.0);
    }

    #[test]
    fn positioning_detects_type() {
        let draft = segment("Para one [1].\nPara two [2].");
        let judge = StubJudge::new("yes").task_default(TaskId::PositioningType, "3").build();
        let r = positioning(&draft, PositioningStyle::PerParagraph, &judge).unwrap();
        assert!(!r.exists);
        assert!(!r.type_match);
        assert_eq!(r.ratio.ratio, 1.0);
        let judge = StubJudge::new("yes").task_default(TaskId::PositioningType, "1").build();
        let r = positioning(&draft, PositioningStyle::PerParagraph, &judge).unwrap();
        assert!(r.exists && r.type_match);
        assert!(positioning(&segment(""), PositioningStyle::PerParagraph, &judge).is_err());
        assert!(positioning_ratio(&draft, PositioningStyle::NoPositioning, &judge).is_err());
    }
}
