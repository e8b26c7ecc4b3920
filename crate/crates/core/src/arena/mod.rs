//! Expert arena: anonymised pairwise sessions, TrueSkill ratings, and the
//! agreement between expert choices and framework scores.

pub mod alignment;
pub mod session;
pub mod store;
pub mod trueskill;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use alignment::{framework_vote, match_rate, Choice, ExpertJudgment, FrameworkVote};
pub use session::{
    annotate, ArenaSession, ArenaState, Command, DraftAnnotation, Event, EventKind, LeaderboardEntry, ModelView,
    Round, RoundView, SessionView, Side, Slot,
};
pub use store::ArenaStore;
pub use trueskill::{match_quality, next_pair, update_ratings, Outcome, Rating, TrueSkillParams};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ArenaError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("corrupt event log at line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

/// What experts judge in each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArenaCriterion {
    Coherence,
    Positioning,
    FeedbackFollowing,
}

impl ArenaCriterion {
    pub const ALL: [ArenaCriterion; 3] = [
        ArenaCriterion::Coherence,
        ArenaCriterion::Positioning,
        ArenaCriterion::FeedbackFollowing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ArenaCriterion::Coherence => "coherence",
            ArenaCriterion::Positioning => "positioning",
            ArenaCriterion::FeedbackFollowing => "feedback-following",
        }
    }
}

impl std::fmt::Display for ArenaCriterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One expert decision between two generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub session: String,
    pub iteration: usize,
    pub criterion: ArenaCriterion,
    /// For ties, the two generators in session order.
    pub winner: String,
    pub loser: String,
    pub tie: bool,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}
