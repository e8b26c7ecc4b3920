#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rwgrade_core::corpus::{load_corpus, CitationSet};
use rwgrade_core::judge::prompts::{
    coherence_prompt, feedback_prompt, positioning_direct_prompt, positioning_pairwise_prompt,
    positioning_type_prompt,
};
use rwgrade_core::pipeline::{apply_scenario, draft_prompt, RunConfig, Scenario};

pub fn fixture(name: &str) -> PathBuf {
    // Resolves from any workspace crate that includes this module.
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures")).join(name)
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/golden"))
}

/// Golden file name and rendered (system, user) text for each prompt kind.
pub fn golden_prompts() -> Vec<(&'static str, String, String)> {
    let corpus = corpus();
    let graph = &corpus[0];
    let first = graph.gold_related_work.lines().next().unwrap();
    let mut out: Vec<(&'static str, String, String)> = [
        (
            "coherence.txt",
            coherence_prompt(&graph.cited[&2].context(), "Graph neural networks propagate features [2].", 2),
        ),
        ("positioning_type.txt", positioning_type_prompt(&graph.gold_related_work)),
        ("positioning_direct.txt", positioning_direct_prompt(first)),
        (
            "positioning_pairwise.txt",
            positioning_pairwise_prompt(first, "Our work differs from all of the above."),
        ),
        (
            "feedback.txt",
            feedback_prompt("(1) Missed papers: [2].\n(2) Length: within range."),
        ),
    ]
    .into_iter()
    .map(|(name, p)| (name, p.system, p.user))
    .collect();

    let adapt = &corpus[1];
    let cfg = RunConfig {
        scenario: Scenario::NewPaper,
        ..RunConfig::default()
    };
    let setup = apply_scenario(&cfg, adapt, 1).unwrap();
    let (system, user) = draft_prompt(adapt, &setup, None).unwrap();
    out.push(("draft_first.txt", system, user));
    let setup = apply_scenario(&cfg, adapt, 3).unwrap();
    let (system, user) = draft_prompt(adapt, &setup, Some(("Previous draft [1].", "Cite [10]."))).unwrap();
    out.push(("draft_revise.txt", system, user));
    out
}

pub fn golden_text(system: &str, user: &str) -> String {
    format!("=== system ===\n{system}\n=== user ===\n{user}\n")
}

pub fn corpus() -> Vec<CitationSet> {
    load_corpus(fixture("corpus.json")).expect("fixture corpus loads")
}

/// A generated text together with the attribution it should produce.
pub struct OracleCase {
    pub text: String,
    pub expected: BTreeMap<u32, f64>,
}

/// Random text of at most 5 paragraphs citing indices 1..=4, with the
/// emphasis profile computed from the generating structure rather than by
/// parsing the text: each sentence's tokens go to the citations of the
/// nearest citing sentence at or before it in the same paragraph.
pub fn oracle_case(rng: &mut ChaCha8Rng) -> OracleCase {
    let n_par = rng.random_range(1..=5);
    let mut paragraphs: Vec<Vec<(usize, Vec<u32>)>> = Vec::new();
    for _ in 0..n_par {
        let n_sent = rng.random_range(1..=4);
        let mut sentences = Vec::new();
        for _ in 0..n_sent {
            let words = rng.random_range(1..=7);
            let cites: Vec<u32> = if rng.random_bool(0.5) {
                let k = rng.random_range(1..=3);
                (0..k).map(|_| rng.random_range(1..=4)).collect()
            } else {
                Vec::new()
            };
            sentences.push((words, cites));
        }
        paragraphs.push(sentences);
    }
    let mut text_pars = Vec::new();
    let mut tokens: BTreeMap<u32, usize> = BTreeMap::new();
    let mut total = 0usize;
    for p in &paragraphs {
        let mut rendered = Vec::new();
        for (j, (words, cites)) in p.iter().enumerate() {
            let mut s = vec!["Token"; *words].join(" ");
            let mut t = *words;
            if !cites.is_empty() {
                let list: Vec<String> = cites.iter().map(u32::to_string).collect();
                s.push_str(&format!(" [{}]", list.join(", ")));
                t += list.len();
            }
            s.push('.');
            rendered.push(s);
            total += t;
            let owner = p[..=j].iter().rev().find(|(_, c)| !c.is_empty());
            if let Some((_, c)) = owner {
                let mut seen = Vec::new();
                for idx in c {
                    if !seen.contains(idx) {
                        seen.push(*idx);
                        *tokens.entry(*idx).or_default() += t;
                    }
                }
            }
        }
        text_pars.push(rendered.join(" "));
    }
    OracleCase {
        text: text_pars.join("\n\n"),
        expected: tokens.into_iter().map(|(k, v)| (k, v as f64 / total as f64)).collect(),
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
