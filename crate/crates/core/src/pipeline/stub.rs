//! Network-free generator, feedback writer and judge for offline runs.
//!
//! The stub generator writes templated drafts from the prompt it receives; the
//! stub judge recognises the phrase "our work" as a positioning statement and
//! rejects a seeded tenth of citation pairs. Output depends only on the seed
//! and the prompt bytes.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use sha2::{Digest, Sha256};

use crate::corpus::CitationSet;
use crate::judge::prompts::fingerprint;
use crate::judge::{Judge, StubJudge, TaskId};
use crate::llm::{TextModel, TransportError};
use crate::metrics::PositioningStyle;

const POSITIONING_MARK: &str = "our work";

static CITED_TITLE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^CITED PAPER \[(\d+)\] TITLE: (.*)$").expect("valid regex"));
static MAIN_TITLE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^MAIN PAPER TITLE: (.*)$").expect("valid regex"));

fn digest_u64(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
        h.update([0]);
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StubMode {
    /// Writes a fresh draft citing every provided paper.
    CiteAll,
    /// Like `CiteAll` for the first draft, then returns the previous draft unchanged.
    Sticky,
    /// Returns the gold related-work text of the paper, if known.
    Echo,
}

pub struct StubGenerator {
    name: String,
    mode: StubMode,
    seed: u64,
    gold_by_title: BTreeMap<String, String>,
}

impl StubGenerator {
    pub fn new(name: impl Into<String>, mode: StubMode, seed: u64) -> Self {
        Self {
            name: name.into(),
            mode,
            seed,
            gold_by_title: BTreeMap::new(),
        }
    }

    /// Echo generator answering with each set's gold text.
    pub fn echo(name: impl Into<String>, corpus: &[CitationSet]) -> Self {
        let mut g = Self::new(name, StubMode::Echo, 0);
        g.gold_by_title = corpus
            .iter()
            .map(|s| (s.main.title.clone(), s.gold_related_work.clone()))
            .collect();
        g
    }

    fn compose(&self, system: &str, user: &str) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(digest_u64(&[
            &self.seed.to_le_bytes(),
            self.name.as_bytes(),
            user.as_bytes(),
        ]));
        let main = MAIN_TITLE
            .captures(user)
            .map_or("this paper".to_string(), |c| c[1].trim().to_string());
        let papers: Vec<(String, String)> = CITED_TITLE
            .captures_iter(user)
            .map(|c| (c[1].to_string(), c[2].trim().to_string()))
            .collect();
        let final_style = system.contains(PositioningStyle::FinalParagraph.contribution_instruction());

        let mut paragraphs: Vec<String> = Vec::new();
        let mut rest = papers.as_slice();
        while !rest.is_empty() {
            let take = rng.random_range(2..=4).min(rest.len());
            let (group, tail) = rest.split_at(take);
            rest = tail;
            let mut sentences: Vec<String> = Vec::new();
            for (idx, title) in group {
                let s = match rng.random_range(0..4) {
                    0 => format!("{title} was proposed in [{idx}]."),
                    1 => format!("The authors of [{idx}] introduced {title}."),
                    2 => format!("A related direction is {title} [{idx}]."),
                    _ => format!("Prior work studied {title} [{idx}]."),
                };
                sentences.push(s);
                if rng.random_bool(0.3) {
                    sentences.push("This line of work reports consistent gains on standard benchmarks.".into());
                }
            }
            if !final_style {
                sentences.push(format!("Unlike these approaches, {POSITIONING_MARK} on {main} addresses their shared limitation."));
            }
            paragraphs.push(sentences.join(" "));
        }
        if final_style && !paragraphs.is_empty() {
            paragraphs.push(format!(
                "In contrast to all of the approaches above, {POSITIONING_MARK} on {main} combines their strengths."
            ));
        }
        paragraphs.join("\n\n")
    }
}

fn section_after<'a>(text: &'a str, label: &str, until: Option<&str>) -> Option<&'a str> {
    let start = text.rfind(label)? + label.len();
    let rest = &text[start..];
    let end = until.and_then(|u| rest.find(u)).unwrap_or(rest.len());
    Some(rest[..end].trim())
}

impl TextModel for StubGenerator {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(&self, task: TaskId, system: &str, user: &str) -> Result<String, TransportError> {
        let revising = task == TaskId::DraftRevise;
        match self.mode {
            StubMode::Sticky if revising => Ok(section_after(user, "PREVIOUS DRAFT: ", Some("\n\nFEEDBACK: "))
                .unwrap_or_default()
                .to_string()),
            StubMode::Echo => {
                let title = MAIN_TITLE.captures(user).map(|c| c[1].trim().to_string());
                Ok(title
                    .and_then(|t| self.gold_by_title.get(&t).cloned())
                    .unwrap_or_else(|| self.compose(system, user)))
            }
            _ => Ok(self.compose(system, user)),
        }
    }
}

/// Feedback writer that lists the report lines pointing at a problem.
pub struct StubFeedback;

impl TextModel for StubFeedback {
    fn name(&self) -> &str {
        "stub-feedback"
    }

    fn generate(&self, _task: TaskId, _system: &str, user: &str) -> Result<String, TransportError> {
        let report = section_after(user, "EVALUATION REPORT: ", None).unwrap_or(user);
        let problems: Vec<&str> = report
            .lines()
            .map(str::trim)
            .filter(|l| {
                !(l.is_empty()
                    || l.ends_with(": adequate")
                    || l.ends_with("Hallucinated papers: none.") && l.contains("Missed papers: none")
                    || l.contains("within the expected range")
                    || l.ends_with("coherence: none.")
                    || l.ends_with("(share of the text attributed to each paper):"))
            })
            .collect();
        Ok(if problems.is_empty() {
            "Maintain the current draft.".into()
        } else {
            format!("Revise the following: {}", problems.join(" "))
        })
    }
}

fn paragraphs(text: &str) -> Vec<&str> {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
}

fn mentions_position(text: &str) -> bool {
    text.to_lowercase().contains(POSITIONING_MARK)
}

/// Judge that scores stub drafts without a model.
pub fn heuristic_judge(seed: u64) -> Judge {
    StubJudge::new("yes")
        .responder(move |req| {
            let answer = match req.task {
                TaskId::PositioningType => {
                    let ps = paragraphs(section_after(&req.user, "DRAFT: ", None)?);
                    let marked: Vec<bool> = ps.iter().map(|p| mentions_position(p)).collect();
                    if !marked.is_empty() && marked.iter().all(|m| *m) {
                        "1"
                    } else if marked.last() == Some(&true) && marked.iter().filter(|m| **m).count() == 1 {
                        "2"
                    } else {
                        "3"
                    }
                }
                TaskId::PositioningRatioDirect => {
                    if mentions_position(section_after(&req.user, "DRAFT: ", None)?) {
                        "yes"
                    } else {
                        "no"
                    }
                }
                TaskId::PositioningRatioPairwise => {
                    if mentions_position(section_after(&req.user, "FINAL: ", None)?) {
                        "yes"
                    } else {
                        "no"
                    }
                }
                TaskId::Coherence => {
                    let fp = fingerprint(req.task, &req.system, &req.user);
                    if digest_u64(&[&seed.to_le_bytes(), fp.as_bytes()]).is_multiple_of(10) {
                        "no"
                    } else {
                        "yes"
                    }
                }
                _ => return None,
            };
            Some(answer.to_string())
        })
        .build()
}
