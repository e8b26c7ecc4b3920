//! Framework votes on generator pairs and their agreement with expert choices.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ArenaCriterion, ArenaError};
use crate::pipeline::{Criterion, IterationRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Choice {
    A,
    B,
    Tie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameworkVote {
    pub criterion: ArenaCriterion,
    pub choice: Choice,
    /// The framework could not decide (incomplete reports); never counts as a match.
    pub abstained: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertJudgment {
    pub criterion: ArenaCriterion,
    pub choice: Choice,
}

fn compare(a: f64, b: f64) -> Choice {
    if a > b {
        Choice::A
    } else if b > a {
        Choice::B
    } else {
        Choice::Tie
    }
}

/// Which of two generators the framework prefers on `criterion`, given their
/// records over the same iterations.
///
/// Coherence and positioning compare the coherence ratio and positioning
/// ratio at the last iteration of the slice. Feedback-following compares,
/// for each tracked criterion, the change from the first to the last
/// iteration; the generator that improved more on more criteria wins.
pub fn framework_vote(
    a: &[IterationRecord],
    b: &[IterationRecord],
    criterion: ArenaCriterion,
) -> Result<FrameworkVote, ArenaError> {
    let iters = |s: &[IterationRecord]| s.iter().map(|r| r.iteration).collect::<Vec<_>>();
    if a.is_empty() || iters(a) != iters(b) {
        return Err(ArenaError::Validation(
            "framework vote needs two non-empty slices over the same iterations".into(),
        ));
    }
    let abstain = FrameworkVote {
        criterion,
        choice: Choice::Tie,
        abstained: true,
    };
    let (la, lb) = (&a[a.len() - 1].report, &b[b.len() - 1].report);
    let choice = match criterion {
        ArenaCriterion::Coherence => {
            if !(la.coherence.complete() && lb.coherence.complete()) {
                return Ok(abstain);
            }
            compare(la.coherence.coherence_ratio, lb.coherence.coherence_ratio)
        }
        ArenaCriterion::Positioning => {
            if la.positioning.failures() > 0 || lb.positioning.failures() > 0 {
                return Ok(abstain);
            }
            compare(la.positioning.ratio.ratio, lb.positioning.ratio.ratio)
        }
        ArenaCriterion::FeedbackFollowing => {
            if a.len() < 2 {
                return Err(ArenaError::Validation(
                    "feedback-following needs at least two iterations".into(),
                ));
            }
            if a.iter().chain(b).any(|r| !r.report.complete) {
                return Ok(abstain);
            }
            let delta = |s: &[IterationRecord], c: Criterion| {
                s[s.len() - 1].report.scores()[&c] - s[0].report.scores()[&c]
            };
            let (mut wins_a, mut wins_b) = (0, 0);
            for c in Criterion::DELTA {
                match compare(delta(a, c), delta(b, c)) {
                    Choice::A => wins_a += 1,
                    Choice::B => wins_b += 1,
                    Choice::Tie => {}
                }
            }
            compare(wins_a as f64, wins_b as f64)
        }
    };
    Ok(FrameworkVote {
        criterion,
        choice,
        abstained: false,
    })
}

/// Share of expert judgments the framework agrees with, per criterion.
/// `expert[i]` and `framework[i]` must describe the same comparison.
pub fn match_rate(
    expert: &[ExpertJudgment],
    framework: &[FrameworkVote],
) -> Result<BTreeMap<ArenaCriterion, f64>, ArenaError> {
    if expert.len() != framework.len() {
        return Err(ArenaError::Validation(format!(
            "{} expert judgments but {} framework votes",
            expert.len(),
            framework.len()
        )));
    }
    let mut tally: BTreeMap<ArenaCriterion, (usize, usize)> = BTreeMap::new();
    for (i, (e, f)) in expert.iter().zip(framework).enumerate() {
        if e.criterion != f.criterion {
            return Err(ArenaError::Validation(format!(
                "entry {i}: expert judged {} but framework voted on {}",
                e.criterion, f.criterion
            )));
        }
        let t = tally.entry(e.criterion).or_default();
        t.1 += 1;
        if !f.abstained && f.choice == e.choice {
            t.0 += 1;
        }
    }
    Ok(tally
        .into_iter()
        .map(|(c, (hit, n))| (c, hit as f64 / n as f64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vote(choice: Choice, abstained: bool) -> FrameworkVote {
        FrameworkVote {
            criterion: ArenaCriterion::Coherence,
            choice,
            abstained,
        }
    }

    #[test]
    fn rate_counts_abstentions_as_misses() {
        let e = [ExpertJudgment {
            criterion: ArenaCriterion::Coherence,
            choice: Choice::Tie,
        }; 4];
        let f = [
            vote(Choice::Tie, false),
            vote(Choice::Tie, true),
            vote(Choice::A, false),
            vote(Choice::Tie, false),
        ];
        assert_eq!(match_rate(&e, &f).unwrap()[&ArenaCriterion::Coherence], 0.5);
    }

    #[test]
    fn misaligned_inputs_rejected() {
        let e = [ExpertJudgment {
            criterion: ArenaCriterion::Positioning,
            choice: Choice::A,
        }];
        assert!(match_rate(&e, &[]).is_err());
        assert!(match_rate(&e, &[vote(Choice::A, false)]).is_err());
    }
}
