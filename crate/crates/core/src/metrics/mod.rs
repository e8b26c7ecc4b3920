//! Hard and soft constraint metrics.

pub mod hard;
pub mod soft;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judge::JudgeError;

pub use hard::{
    coherence, positioning, positioning_ratio, verify_citations, CitationVerification, CoherenceResult, PairVerdict,
    ParagraphCheck, PositioningResult, RatioResult,
};
pub use soft::{
    emphasis_profile, emphasis_score, length_check, length_pass, positioning_type_match, EmphasisProfile,
    EmphasisScore, LengthCheck, DEFAULT_TOLERANCE,
};

/// How a draft positions the main paper against the cited work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PositioningStyle {
    /// Every paragraph ends by relating its topic to the main paper.
    PerParagraph,
    /// A closing paragraph summarises the contribution against all previous ones.
    FinalParagraph,
    /// No positioning statement at all.
    NoPositioning,
}

impl PositioningStyle {
    /// Label used by the positioning-type judge.
    pub fn answer(self) -> &'static str {
        match self {
            PositioningStyle::PerParagraph => "1",
            PositioningStyle::FinalParagraph => "2",
            PositioningStyle::NoPositioning => "3",
        }
    }

    pub fn from_answer(answer: &str) -> Option<Self> {
        match answer.trim() {
            "1" => Some(PositioningStyle::PerParagraph),
            "2" => Some(PositioningStyle::FinalParagraph),
            "3" => Some(PositioningStyle::NoPositioning),
            _ => None,
        }
    }

    /// The other requestable style. `NoPositioning` maps to itself.
    pub fn flipped(self) -> Self {
        match self {
            PositioningStyle::PerParagraph => PositioningStyle::FinalParagraph,
            PositioningStyle::FinalParagraph => PositioningStyle::PerParagraph,
            PositioningStyle::NoPositioning => PositioningStyle::NoPositioning,
        }
    }

    /// Instruction substituted for `{contribution_information}` in the draft prompts.
    pub fn contribution_instruction(self) -> &'static str {
        match self {
            PositioningStyle::PerParagraph => {
                "State the main paper's contribution or its position among the literature in each paragraph."
            }
            PositioningStyle::FinalParagraph => {
                "Add a final paragraph that summarizes the main paper's contribution and its position against the work discussed in all previous paragraphs."
            }
            PositioningStyle::NoPositioning => "",
        }
    }
}

impl std::fmt::Display for PositioningStyle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PositioningStyle::PerParagraph => "per-paragraph",
            PositioningStyle::FinalParagraph => "final-paragraph",
            PositioningStyle::NoPositioning => "none",
        })
    }
}

impl std::str::FromStr for PositioningStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1" | "per-paragraph" => Ok(PositioningStyle::PerParagraph),
            "2" | "final-paragraph" => Ok(PositioningStyle::FinalParagraph),
            "3" | "none" => Ok(PositioningStyle::NoPositioning),
            other => Err(format!("unknown positioning style `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MetricError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error(transparent)]
    Judge(#[from] JudgeError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn style_round_trips_through_answer_and_name() {
        for s in [
            PositioningStyle::PerParagraph,
            PositioningStyle::FinalParagraph,
            PositioningStyle::NoPositioning,
        ] {
            assert_eq!(PositioningStyle::from_answer(s.answer()), Some(s));
            assert_eq!(s.to_string().parse::<PositioningStyle>(), Ok(s));
        }
        assert_eq!(PositioningStyle::PerParagraph.flipped(), PositioningStyle::FinalParagraph);
    }
}
