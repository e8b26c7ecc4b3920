//! Arena state machine. Every mutation is an [`Event`]; state is the fold of
//! the event sequence, so replaying a log reproduces it exactly.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::trueskill::{next_pair, update_ratings, Outcome, Rating, TrueSkillParams};
use super::{ArenaCriterion, ArenaError, MatchRecord};
use crate::corpus::CitationSet;
use crate::metrics::{length_pass, verify_citations};
use crate::textops::{segment, CitationIndex};

pub const DEFAULT_EXPERT_ITERATIONS: usize = 3;

/// Anonymous position of a generator within a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Slot {
    #[serde(rename = "model-1")]
    Model1,
    #[serde(rename = "model-2")]
    Model2,
}

impl Slot {
    fn index(self) -> usize {
        match self {
            Slot::Model1 => 0,
            Slot::Model2 => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Slot::Model1 => "Model 1",
            Slot::Model2 => "Model 2",
        }
    }
}

/// An expert's choice in one criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "model-1")]
    Model1,
    #[serde(rename = "model-2")]
    Model2,
    #[serde(rename = "tie")]
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub iteration: usize,
    pub drafts: [Option<String>; 2],
    pub feedback: [Option<String>; 2],
    pub judgments: BTreeMap<ArenaCriterion, Side>,
}

impl Round {
    fn new(iteration: usize) -> Self {
        Self {
            iteration,
            drafts: [None, None],
            feedback: [None, None],
            judgments: BTreeMap::new(),
        }
    }

    /// Both drafts are present, so judgments may be posted.
    pub fn ready(&self) -> bool {
        self.drafts.iter().all(Option::is_some)
    }

    pub fn complete(&self) -> bool {
        self.ready() && ArenaCriterion::ALL.iter().all(|c| self.judgments.contains_key(c))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArenaSession {
    pub id: String,
    pub expert_id: String,
    pub paper_id: String,
    /// Generator ids behind "Model 1" and "Model 2".
    pub models: [String; 2],
    pub iterations: usize,
    pub rounds: Vec<Round>,
    pub created_at: u64,
}

impl ArenaSession {
    pub fn round(&self, iteration: usize) -> Option<&Round> {
        iteration.checked_sub(1).and_then(|i| self.rounds.get(i))
    }

    pub fn complete(&self) -> bool {
        self.rounds.len() == self.iterations && self.rounds.iter().all(Round::complete)
    }
}

/// Requests accepted by the arena.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Command {
    RegisterGenerator {
        id: String,
    },
    CreateSession {
        expert_id: String,
        paper_id: String,
        generator_a: String,
        generator_b: String,
        #[serde(default)]
        iterations: Option<usize>,
    },
    PostDraft {
        session: String,
        iteration: usize,
        slot: Slot,
        text: String,
    },
    PostFeedback {
        session: String,
        iteration: usize,
        slot: Slot,
        text: String,
    },
    PostJudgment {
        session: String,
        iteration: usize,
        criterion: ArenaCriterion,
        choice: Side,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum EventKind {
    GeneratorRegistered {
        id: String,
    },
    SessionCreated {
        session: String,
        expert_id: String,
        paper_id: String,
        models: [String; 2],
        iterations: usize,
    },
    DraftPosted {
        session: String,
        iteration: usize,
        slot: Slot,
        text: String,
    },
    FeedbackPosted {
        session: String,
        iteration: usize,
        slot: Slot,
        text: String,
    },
    JudgmentPosted {
        session: String,
        iteration: usize,
        criterion: ArenaCriterion,
        choice: Side,
    },
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    /// Milliseconds since the Unix epoch.
    pub at: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub generator: String,
    pub mu: f64,
    pub sigma: f64,
    pub conservative: f64,
    pub matches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArenaState {
    pub params: TrueSkillParams,
    /// Seeds the Model 1 / Model 2 side assignment.
    pub seed: u64,
    pub events: u64,
    pub next_session: u64,
    pub generators: BTreeSet<String>,
    pub sessions: BTreeMap<String, ArenaSession>,
    pub ratings: BTreeMap<ArenaCriterion, BTreeMap<String, Rating>>,
    pub overall: BTreeMap<String, Rating>,
    pub matches: Vec<MatchRecord>,
}

fn text_conflict(what: &str, existing: &Option<String>, new: &str) -> Result<bool, ArenaError> {
    match existing {
        None => Ok(true),
        Some(old) if old == new => Ok(false),
        Some(_) => Err(ArenaError::Conflict(format!("{what} was already posted with different text"))),
    }
}

impl ArenaState {
    pub fn new(seed: u64, params: TrueSkillParams) -> Self {
        Self {
            params,
            seed,
            events: 0,
            next_session: 1,
            generators: BTreeSet::new(),
            sessions: BTreeMap::new(),
            ratings: BTreeMap::new(),
            overall: BTreeMap::new(),
            matches: Vec::new(),
        }
    }

    fn session(&self, id: &str) -> Result<&ArenaSession, ArenaError> {
        self.sessions
            .get(id)
            .ok_or_else(|| ArenaError::NotFound(format!("session {id}")))
    }

    /// The round `iteration` of `session` as it would be after accepting a post:
    /// an existing round, or a new one directly after a round with both drafts.
    fn open_round<'s>(&self, session: &'s ArenaSession, iteration: usize) -> Result<Option<&'s Round>, ArenaError> {
        if iteration == 0 || iteration > session.iterations {
            return Err(ArenaError::Validation(format!(
                "iteration {iteration} outside 1..={}",
                session.iterations
            )));
        }
        if let Some(r) = session.round(iteration) {
            return Ok(Some(r));
        }
        if iteration == session.rounds.len() + 1 && session.rounds.last().is_none_or(Round::ready) {
            return Ok(None);
        }
        Err(ArenaError::Validation(format!(
            "iteration {iteration} is not open; previous iteration needs both drafts first"
        )))
    }

    /// Validates `command` and returns the event it produces, or `None` if it
    /// repeats something already recorded.
    pub fn plan(&self, command: Command) -> Result<Option<EventKind>, ArenaError> {
        match command {
            Command::RegisterGenerator { id } => {
                if id.trim().is_empty() {
                    return Err(ArenaError::Validation("generator id is empty".into()));
                }
                Ok((!self.generators.contains(&id)).then_some(EventKind::GeneratorRegistered { id }))
            }
            Command::CreateSession {
                expert_id,
                paper_id,
                generator_a,
                generator_b,
                iterations,
            } => {
                let iterations = iterations.unwrap_or(DEFAULT_EXPERT_ITERATIONS);
                if iterations == 0 {
                    return Err(ArenaError::Validation("iterations must be at least 1".into()));
                }
                if generator_a.trim().is_empty() || generator_b.trim().is_empty() {
                    return Err(ArenaError::Validation("generator ids must be non-empty".into()));
                }
                if generator_a == generator_b {
                    return Err(ArenaError::Validation("a session needs two different generators".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ self.next_session.wrapping_mul(0x9e37_79b9_7f4a_7c15));
                let models = if rng.random_bool(0.5) {
                    [generator_b, generator_a]
                } else {
                    [generator_a, generator_b]
                };
                Ok(Some(EventKind::SessionCreated {
                    session: format!("s{:06}", self.next_session),
                    expert_id,
                    paper_id,
                    models,
                    iterations,
                }))
            }
            Command::PostDraft {
                session,
                iteration,
                slot,
                text,
            } => {
                let s = self.session(&session)?;
                let fresh = match self.open_round(s, iteration)? {
                    None => true,
                    Some(r) => text_conflict("draft", &r.drafts[slot.index()], &text)?,
                };
                Ok(fresh.then_some(EventKind::DraftPosted {
                    session,
                    iteration,
                    slot,
                    text,
                }))
            }
            Command::PostFeedback {
                session,
                iteration,
                slot,
                text,
            } => {
                let s = self.session(&session)?;
                let round = s
                    .round(iteration)
                    .filter(|r| r.drafts[slot.index()].is_some())
                    .ok_or_else(|| {
                        ArenaError::Validation(format!("no draft from {} at iteration {iteration}", slot.label()))
                    })?;
                let fresh = text_conflict("feedback", &round.feedback[slot.index()], &text)?;
                Ok(fresh.then_some(EventKind::FeedbackPosted {
                    session,
                    iteration,
                    slot,
                    text,
                }))
            }
            Command::PostJudgment {
                session,
                iteration,
                criterion,
                choice,
            } => {
                let s = self.session(&session)?;
                let round = s.round(iteration).filter(|r| r.ready()).ok_or_else(|| {
                    ArenaError::Validation(format!("iteration {iteration} does not have both drafts yet"))
                })?;
                match round.judgments.get(&criterion) {
                    None => Ok(Some(EventKind::JudgmentPosted {
                        session,
                        iteration,
                        criterion,
                        choice,
                    })),
                    Some(prev) if *prev == choice => Ok(None),
                    Some(_) => Err(ArenaError::Conflict(format!(
                        "{criterion} at iteration {iteration} was already judged differently"
                    ))),
                }
            }
        }
    }

    fn rate(&mut self, criterion: ArenaCriterion, a: &str, b: &str, outcome: Outcome) {
        let params = self.params;
        let table = self.ratings.entry(criterion).or_default();
        let ra = table.get(a).copied().unwrap_or_else(|| params.fresh());
        let rb = table.get(b).copied().unwrap_or_else(|| params.fresh());
        let (na, nb) = update_ratings(ra, rb, outcome, &params);
        table.insert(a.to_string(), na);
        table.insert(b.to_string(), nb);
        let ra = self.overall.get(a).copied().unwrap_or_else(|| params.fresh());
        let rb = self.overall.get(b).copied().unwrap_or_else(|| params.fresh());
        let (na, nb) = update_ratings(ra, rb, outcome, &params);
        self.overall.insert(a.to_string(), na);
        self.overall.insert(b.to_string(), nb);
    }

    /// Applies one event. The event must have been produced by [`plan`](Self::plan)
    /// against this state, or read back from a log that was.
    pub fn apply(&mut self, event: &Event) -> Result<(), ArenaError> {
        if event.seq != self.events + 1 {
            return Err(ArenaError::Validation(format!(
                "event sequence {} does not follow {}",
                event.seq, self.events
            )));
        }
        match &event.kind {
            EventKind::GeneratorRegistered { id } => {
                self.generators.insert(id.clone());
            }
            EventKind::SessionCreated {
                session,
                expert_id,
                paper_id,
                models,
                iterations,
            } => {
                if self.sessions.contains_key(session) {
                    return Err(ArenaError::Conflict(format!("session {session} already exists")));
                }
                self.generators.extend(models.iter().cloned());
                self.sessions.insert(
                    session.clone(),
                    ArenaSession {
                        id: session.clone(),
                        expert_id: expert_id.clone(),
                        paper_id: paper_id.clone(),
                        models: models.clone(),
                        iterations: *iterations,
                        rounds: Vec::new(),
                        created_at: event.at,
                    },
                );
                self.next_session += 1;
            }
            EventKind::DraftPosted {
                session,
                iteration,
                slot,
                text,
            } => {
                let s = self.session(session)?;
                let is_new = self.open_round(s, *iteration)?.is_none();
                let s = self.sessions.get_mut(session).expect("checked above");
                if is_new {
                    s.rounds.push(Round::new(*iteration));
                }
                s.rounds[*iteration - 1].drafts[slot.index()] = Some(text.clone());
            }
            EventKind::FeedbackPosted {
                session,
                iteration,
                slot,
                text,
            } => {
                let s = self
                    .sessions
                    .get_mut(session)
                    .ok_or_else(|| ArenaError::NotFound(format!("session {session}")))?;
                let round = iteration
                    .checked_sub(1)
                    .and_then(|i| s.rounds.get_mut(i))
                    .ok_or_else(|| ArenaError::Validation(format!("no round {iteration}")))?;
                round.feedback[slot.index()] = Some(text.clone());
            }
            EventKind::JudgmentPosted {
                session,
                iteration,
                criterion,
                choice,
            } => {
                let s = self
                    .sessions
                    .get_mut(session)
                    .ok_or_else(|| ArenaError::NotFound(format!("session {session}")))?;
                let models = s.models.clone();
                let round = iteration
                    .checked_sub(1)
                    .and_then(|i| s.rounds.get_mut(i))
                    .filter(|r| r.ready())
                    .ok_or_else(|| ArenaError::Validation(format!("round {iteration} not ready")))?;
                round.judgments.insert(*criterion, *choice);
                let (winner, loser, outcome) = match choice {
                    Side::Model1 | Side::Tie => (&models[0], &models[1], Outcome::AWins),
                    Side::Model2 => (&models[1], &models[0], Outcome::AWins),
                };
                let outcome = if *choice == Side::Tie { Outcome::Draw } else { outcome };
                self.rate(*criterion, winner, loser, outcome);
                self.matches.push(MatchRecord {
                    session: session.clone(),
                    iteration: *iteration,
                    criterion: *criterion,
                    winner: winner.clone(),
                    loser: loser.clone(),
                    tie: *choice == Side::Tie,
                    timestamp: event.at,
                });
            }
        }
        self.events = event.seq;
        Ok(())
    }

    /// Ratings sorted by conservative score, best first. `None` ranks by all
    /// judgments together.
    pub fn leaderboard(&self, criterion: Option<ArenaCriterion>) -> Vec<LeaderboardEntry> {
        let empty = BTreeMap::new();
        let table = match criterion {
            None => &self.overall,
            Some(c) => self.ratings.get(&c).unwrap_or(&empty),
        };
        let mut out: Vec<LeaderboardEntry> = self
            .generators
            .iter()
            .map(|g| {
                let r = table.get(g).copied().unwrap_or_else(|| self.params.fresh());
                LeaderboardEntry {
                    generator: g.clone(),
                    mu: r.mu,
                    sigma: r.sigma,
                    conservative: r.conservative(),
                    matches: self
                        .matches
                        .iter()
                        .filter(|m| criterion.is_none_or(|c| m.criterion == c) && (m.winner == *g || m.loser == *g))
                        .count(),
                }
            })
            .collect();
        out.sort_by(|a, b| b.conservative.total_cmp(&a.conservative).then_with(|| a.generator.cmp(&b.generator)));
        out
    }

    /// Most informative pairing over all known generators by overall rating.
    pub fn next_pair(&self) -> Result<(String, String), ArenaError> {
        let pool: Vec<(String, Rating)> = self
            .generators
            .iter()
            .map(|g| (g.clone(), self.overall.get(g).copied().unwrap_or_else(|| self.params.fresh())))
            .collect();
        next_pair(&pool, &self.matches, &self.params)
    }

    /// Expert-facing view without generator ids.
    pub fn session_view(
        &self,
        id: &str,
        annotate: &dyn Fn(&str, &str) -> Option<DraftAnnotation>,
    ) -> Result<SessionView, ArenaError> {
        let s = self.session(id)?;
        let rounds = s
            .rounds
            .iter()
            .map(|r| RoundView {
                iteration: r.iteration,
                models: [Slot::Model1, Slot::Model2].map(|slot| {
                    let draft = r.drafts[slot.index()].clone();
                    ModelView {
                        label: slot.label().to_string(),
                        slot,
                        annotation: draft.as_deref().and_then(|d| annotate(&s.paper_id, d)),
                        draft,
                        feedback: r.feedback[slot.index()].clone(),
                    }
                }),
                judgments: r.judgments.clone(),
                judgments_enabled: r.ready(),
            })
            .collect();
        Ok(SessionView {
            id: s.id.clone(),
            expert_id: s.expert_id.clone(),
            paper_id: s.paper_id.clone(),
            iterations: s.iterations,
            rounds,
            complete: s.complete(),
        })
    }
}

/// Pre-computed hints shown next to a draft.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftAnnotation {
    pub missing: Vec<CitationIndex>,
    pub hallucinated: Vec<CitationIndex>,
    pub draft_tokens: usize,
    pub length_pass: bool,
}

/// Missing and hallucinated citations and the length check for a draft.
pub fn annotate(set: &CitationSet, draft: &str, tolerance: f64) -> Option<DraftAnnotation> {
    let doc = segment(draft);
    let v = verify_citations(&doc, &set.indices()).ok()?;
    let gold = segment(&set.gold_related_work).total_tokens;
    Some(DraftAnnotation {
        missing: v.missing_indices.into_iter().collect(),
        hallucinated: v.hallucinated_indices.into_iter().collect(),
        draft_tokens: doc.total_tokens,
        length_pass: gold > 0 && length_pass(doc.total_tokens, gold, tolerance),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelView {
    pub label: String,
    pub slot: Slot,
    pub draft: Option<String>,
    pub feedback: Option<String>,
    pub annotation: Option<DraftAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundView {
    pub iteration: usize,
    pub models: [ModelView; 2],
    pub judgments: BTreeMap<ArenaCriterion, Side>,
    pub judgments_enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub expert_id: String,
    pub paper_id: String,
    pub iterations: usize,
    pub rounds: Vec<RoundView>,
    pub complete: bool,
}
