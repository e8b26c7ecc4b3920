//! Iterative generate / evaluate / feedback loop.
//!
//! Each iteration builds a draft prompt (first-draft or revise), asks the
//! generator for a draft, scores it, and, except after the last iteration,
//! turns the report into feedback for the next revision. Scenarios change
//! the cited set or the expected positioning style part-way through a run.

mod report;
pub mod stub;
mod trace;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CitationSet;
use crate::judge::prompts::{fill, PromptTemplate, TemplateError, CITED_PAPER_BLOCK};
use crate::judge::{Judge, TaskId};
use crate::llm::TextModel;
use crate::metrics::{MetricError, PositioningStyle, DEFAULT_TOLERANCE};
use crate::par::{self, Parallelism};
use crate::textops::CitationIndex;

pub use report::{evaluate_draft, fallback_feedback, report_text, Criterion, EvalTarget, EvaluationReport};
pub use trace::{trace_file_name, IterationRecord, RunTrace, TRACE_SCHEMA};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed trace {path}: {message}")]
    Trace { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    #[default]
    Full,
    /// Some cited papers are withheld until the intervention iteration.
    NewPaper,
    /// The expected positioning style flips at the intervention iteration.
    StyleChange,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Full => "full",
            Scenario::NewPaper => "new-paper",
            Scenario::StyleChange => "style-change",
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Scenario::Full),
            "new-paper" => Ok(Scenario::NewPaper),
            "style-change" => Ok(Scenario::StyleChange),
            other => Err(format!("unknown scenario `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub iterations: usize,
    pub scenario: Scenario,
    pub holdout_fraction: f64,
    pub intervention_iteration: usize,
    pub expected_style: PositioningStyle,
    pub tolerance: f64,
    /// Seed for stub generators; recorded so a run can be replayed.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            iterations: 5,
            scenario: Scenario::Full,
            holdout_fraction: 0.25,
            intervention_iteration: 3,
            expected_style: PositioningStyle::PerParagraph,
            tolerance: DEFAULT_TOLERANCE,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if !(1..=self.iterations).contains(&self.intervention_iteration) {
            return bad(format!(
                "intervention iteration {} outside 1..={}",
                self.intervention_iteration, self.iterations
            ));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return bad(format!("holdout fraction must lie in (0, 1), got {}", self.holdout_fraction));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return bad(format!("tolerance must lie in (0, 1), got {}", self.tolerance));
        }
        if self.expected_style == PositioningStyle::NoPositioning {
            return bad("expected style must be per-paragraph or final-paragraph".into());
        }
        Ok(())
    }

    /// Number of papers withheld out of `n`, rounding halves away from zero.
    pub fn holdout_count(&self, n: usize) -> usize {
        (self.holdout_fraction * n as f64).round() as usize
    }
}

/// What the generator sees and what it is judged against at one iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Setup {
    pub provided: BTreeSet<CitationIndex>,
    pub held_out: BTreeSet<CitationIndex>,
    pub expected_style: PositioningStyle,
}

pub fn apply_scenario(config: &RunConfig, set: &CitationSet, iteration: usize) -> Result<Setup, PipelineError> {
    if !(1..=config.iterations).contains(&iteration) {
        return Err(PipelineError::Config(format!(
            "iteration {iteration} outside 1..={}",
            config.iterations
        )));
    }
    let all = set.indices();
    let before = iteration < config.intervention_iteration;
    match config.scenario {
        Scenario::Full => Ok(Setup {
            provided: all,
            held_out: BTreeSet::new(),
            expected_style: config.expected_style,
        }),
        Scenario::StyleChange => Ok(Setup {
            provided: all,
            held_out: BTreeSet::new(),
            expected_style: if before {
                config.expected_style
            } else {
                config.expected_style.flipped()
            },
        }),
        Scenario::NewPaper => {
            let h = config.holdout_count(all.len());
            if h >= all.len() {
                return Err(PipelineError::Config(format!(
                    "holding out {h} of {} papers leaves none for {}",
                    all.len(),
                    set.id()
                )));
            }
            let held: BTreeSet<_> = all.iter().rev().take(h).copied().collect();
            Ok(if before {
                Setup {
                    provided: all.difference(&held).copied().collect(),
                    held_out: held,
                    expected_style: config.expected_style,
                }
            } else {
                Setup {
                    provided: all,
                    held_out: BTreeSet::new(),
                    expected_style: config.expected_style,
                }
            })
        }
    }
}

/// (system, user) prompt for the draft at `iteration`; `previous` carries the
/// previous draft and its feedback for revisions.
pub fn draft_prompt(
    set: &CitationSet,
    setup: &Setup,
    previous: Option<(&str, &str)>,
) -> Result<(String, String), PipelineError> {
    let blocks = setup
        .provided
        .iter()
        .map(|idx| {
            let paper = &set.cited[idx];
            fill("cited-paper", CITED_PAPER_BLOCK, |slot| match slot {
                "index" => Some(idx.to_string()),
                "title" => Some(paper.title.clone()),
                "abstract" => Some(paper.abstract_text.clone()),
                "introduction" => Some(paper.introduction.clone()),
                _ => None,
            })
            .map(|s| s.trim_end().to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut slots: BTreeMap<&str, String> = BTreeMap::new();
    slots.insert(
        "contribution_information",
        setup.expected_style.contribution_instruction().to_string(),
    );
    slots.insert("main_title", set.main.title.clone());
    slots.insert("main_abstract", set.main.abstract_text.clone());
    slots.insert("main_introduction", set.main.introduction.clone());
    slots.insert("cited_papers", blocks.join("\n\n"));
    let task = match previous {
        None => TaskId::DraftFirst,
        Some((draft, feedback)) => {
            slots.insert("previous_draft", draft.to_string());
            slots.insert("feedback", feedback.to_string());
            TaskId::DraftRevise
        }
    };
    let rendered = PromptTemplate::get(task).render(&slots)?;
    Ok((rendered.system, rendered.user))
}

/// Feedback text for `report`, and whether the rule-based fallback was used.
pub fn generate_feedback(report: &EvaluationReport, model: &dyn TextModel) -> (String, bool) {
    let prompt = crate::judge::prompts::feedback_prompt(&report_text(report));
    match model.generate(TaskId::Feedback, &prompt.system, &prompt.user) {
        Ok(text) if !text.trim().is_empty() => (text.trim().to_string(), false),
        Ok(_) => (fallback_feedback(report), true),
        Err(e) => {
            log::warn!("feedback model failed, using rule-based feedback: {e}");
            (fallback_feedback(report), true)
        }
    }
}

/// Everything a run needs besides the paper.
#[derive(Clone, Copy)]
pub struct Participants<'a> {
    pub generator: &'a dyn TextModel,
    pub feedback: &'a dyn TextModel,
    pub judge: &'a Judge,
}

pub fn run(set: &CitationSet, who: Participants<'_>, config: &RunConfig) -> Result<RunTrace, PipelineError> {
    config.validate()?;
    let mut trace = RunTrace::new(who.generator.name(), set.id(), config.clone());
    let mut previous: Option<(String, String)> = None;
    for k in 1..=config.iterations {
        let setup = apply_scenario(config, set, k)?;
        let (system, user) = draft_prompt(set, &setup, previous.as_ref().map(|(d, f)| (d.as_str(), f.as_str())))?;
        let task = if k == 1 { TaskId::DraftFirst } else { TaskId::DraftRevise };
        let draft = match who.generator.generate(task, &system, &user) {
            Ok(d) => d.trim().to_string(),
            Err(e) => {
                log::warn!("{}: generator failed at iteration {k}: {e}", set.id());
                trace.truncated = Some(format!("generator failed at iteration {k}: {e}"));
                break;
            }
        };
        let target = EvalTarget {
            set,
            provided: &setup.provided,
            expected_style: setup.expected_style,
            tolerance: config.tolerance,
        };
        let report = evaluate_draft(k, &draft, &target, who.judge)?;
        let (feedback, fallback) = if k < config.iterations {
            let (text, fb) = generate_feedback(&report, who.feedback);
            (Some(text), fb)
        } else {
            (None, false)
        };
        log::info!(
            "{} [{}] iteration {k}/{}: hard pass {}, style {}",
            set.id(),
            who.generator.name(),
            config.iterations,
            report.hard_pass(),
            setup.expected_style
        );
        if let Some(f) = &feedback {
            previous = Some((draft.clone(), f.clone()));
        }
        trace.iterations.push(IterationRecord {
            iteration: k,
            provided: setup.provided.into_iter().collect(),
            held_out: setup.held_out.into_iter().collect(),
            expected_style: setup.expected_style,
            draft,
            report,
            feedback,
            feedback_fallback: fallback,
        });
    }
    Ok(trace)
}

/// Runs every set with up to `jobs` papers in flight.
pub fn run_many(
    sets: &[CitationSet],
    who: Participants<'_>,
    config: &RunConfig,
    jobs: usize,
    mode: Parallelism,
) -> Vec<Result<RunTrace, PipelineError>> {
    config.validate().map_or_else(
        |e| sets.iter().map(|_| Err(PipelineError::Config(e.to_string()))).collect(),
        |_| par::with_pool(jobs, mode, || par::map(sets, mode, |set| run(set, who, config))),
    )
}

/// Signed change of each tracked criterion between consecutive iterations.
pub fn improvement_deltas(trace: &RunTrace) -> Result<BTreeMap<Criterion, Vec<f64>>, PipelineError> {
    if trace.iterations.len() < 2 {
        return Err(PipelineError::Config(format!(
            "need at least 2 iterations for deltas, trace has {}",
            trace.iterations.len()
        )));
    }
    let scores: Vec<_> = trace.iterations.iter().map(|it| it.report.scores()).collect();
    Ok(Criterion::DELTA
        .into_iter()
        .map(|c| (c, scores.windows(2).map(|w| w[1][&c] - w[0][&c]).collect()))
        .collect())
}
