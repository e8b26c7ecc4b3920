//! Prompt templates for judging, draft generation and feedback.
//!
//! Template text and the contrastive few-shot examples live under
//! `data/prompts/`, one file per block, and are compiled in. Placeholders are
//! written `{name}`; `{example_N}` slots are filled from the template's
//! few-shot list, everything else from caller-supplied slots. Rendering is a
//! single pass, so slot values are never rescanned for placeholders.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskId {
    Coherence,
    PositioningType,
    PositioningRatioDirect,
    PositioningRatioPairwise,
    Feedback,
    DraftFirst,
    DraftRevise,
}

impl TaskId {
    pub const ALL: [TaskId; 7] = [
        TaskId::Coherence,
        TaskId::PositioningType,
        TaskId::PositioningRatioDirect,
        TaskId::PositioningRatioPairwise,
        TaskId::Feedback,
        TaskId::DraftFirst,
        TaskId::DraftRevise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::Coherence => "coherence",
            TaskId::PositioningType => "positioning-type",
            TaskId::PositioningRatioDirect => "positioning-ratio-direct",
            TaskId::PositioningRatioPairwise => "positioning-ratio-pairwise",
            TaskId::Feedback => "feedback",
            TaskId::DraftFirst => "draft-first",
            TaskId::DraftRevise => "draft-revise",
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template `{task}` has no value for placeholder `{{{slot}}}`")]
    MissingSlot { task: &'static str, slot: String },
}

macro_rules! prompt_file {
    ($name:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/data/prompts/", $name))
    };
}

fn block(text: &'static str) -> &'static str {
    text.strip_suffix('\n').unwrap_or(text)
}

pub struct PromptTemplate {
    pub task: TaskId,
    pub system: &'static str,
    pub user: &'static str,
    pub few_shot: Vec<&'static str>,
}

static TEMPLATES: LazyLock<Vec<PromptTemplate>> = LazyLock::new(|| {
    vec![
        PromptTemplate {
            task: TaskId::Coherence,
            system: block(prompt_file!("coherence_system.txt")),
            user: block(prompt_file!("coherence_user.txt")),
            few_shot: vec![
                block(prompt_file!("coherence_example_1.txt")),
                block(prompt_file!("coherence_example_2.txt")),
            ],
        },
        PromptTemplate {
            task: TaskId::PositioningType,
            system: block(prompt_file!("positioning_type_system.txt")),
            user: block(prompt_file!("positioning_type_user.txt")),
            few_shot: vec![
                block(prompt_file!("positioning_type_example_1.txt")),
                block(prompt_file!("positioning_type_example_2.txt")),
                block(prompt_file!("positioning_type_example_3.txt")),
            ],
        },
        PromptTemplate {
            task: TaskId::PositioningRatioDirect,
            system: block(prompt_file!("positioning_direct_system.txt")),
            user: block(prompt_file!("positioning_direct_user.txt")),
            few_shot: vec![
                block(prompt_file!("positioning_direct_example_1.txt")),
                block(prompt_file!("positioning_direct_example_2.txt")),
            ],
        },
        PromptTemplate {
            task: TaskId::PositioningRatioPairwise,
            system: block(prompt_file!("positioning_pairwise_system.txt")),
            user: block(prompt_file!("positioning_pairwise_user.txt")),
            few_shot: vec![
                block(prompt_file!("positioning_pairwise_example_1.txt")),
                block(prompt_file!("positioning_pairwise_example_2.txt")),
            ],
        },
        PromptTemplate {
            task: TaskId::Feedback,
            system: block(prompt_file!("feedback_system.txt")),
            user: block(prompt_file!("feedback_user.txt")),
            few_shot: vec![],
        },
        PromptTemplate {
            task: TaskId::DraftFirst,
            system: block(prompt_file!("draft_first_system.txt")),
            user: block(prompt_file!("draft_first_user.txt")),
            few_shot: vec![],
        },
        PromptTemplate {
            task: TaskId::DraftRevise,
            system: block(prompt_file!("draft_revise_system.txt")),
            user: block(prompt_file!("draft_revise_user.txt")),
            few_shot: vec![],
        },
    ]
});

pub(crate) const CITED_PAPER_BLOCK: &str = prompt_file!("cited_paper_block.txt");

/// A fully rendered (system, user) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub task: TaskId,
    pub system: String,
    pub user: String,
}

impl RenderedPrompt {
    /// SHA-256 over the task name, system text and user text (NUL separated), hex encoded.
    pub fn fingerprint(&self) -> String {
        fingerprint(self.task, &self.system, &self.user)
    }
}

pub fn fingerprint(task: TaskId, system: &str, user: &str) -> String {
    let mut h = Sha256::new();
    h.update(task.as_str().as_bytes());
    h.update([0]);
    h.update(system.as_bytes());
    h.update([0]);
    h.update(user.as_bytes());
    hex::encode(h.finalize())
}

/// Substitutes `{name}` placeholders in one pass. Braces that do not enclose a
/// `[a-z0-9_]+` name are kept literally.
pub(crate) fn fill(
    task: &'static str,
    template: &str,
    lookup: impl Fn(&str) -> Option<String>,
) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name_len = after
            .find(|c: char| !(c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_'))
            .unwrap_or(after.len());
        if name_len > 0 && after[name_len..].starts_with('}') {
            let name = &after[..name_len];
            let value = lookup(name).ok_or_else(|| TemplateError::MissingSlot {
                task,
                slot: name.to_string(),
            })?;
            out.push_str(&value);
            rest = &after[name_len + 1..];
        } else {
            out.push('{');
            rest = after;
        }
    }
    out.push_str(rest);
    Ok(out)
}

impl PromptTemplate {
    pub fn get(task: TaskId) -> &'static PromptTemplate {
        TEMPLATES.iter().find(|t| t.task == task).expect("every task has a template")
    }

    pub fn render(&self, slots: &BTreeMap<&str, String>) -> Result<RenderedPrompt, TemplateError> {
        let lookup = |name: &str| -> Option<String> {
            if let Some(n) = name.strip_prefix("example_") {
                let n: usize = n.parse().ok()?;
                return self.few_shot.get(n.checked_sub(1)?).map(|s| s.to_string());
            }
            slots.get(name).cloned()
        };
        let task = self.task.as_str();
        Ok(RenderedPrompt {
            task: self.task,
            system: fill(task, self.system, lookup)?,
            user: fill(task, self.user, lookup)?,
        })
    }
}

fn render(task: TaskId, slots: &[(&'static str, String)]) -> RenderedPrompt {
    let slots: BTreeMap<&str, String> = slots.iter().cloned().collect();
    PromptTemplate::get(task)
        .render(&slots)
        .expect("built-in prompt builders supply every slot")
}

pub fn coherence_prompt(paper_context: &str, citation_sentence: &str, citation_number: u32) -> RenderedPrompt {
    render(
        TaskId::Coherence,
        &[
            ("paper_context", paper_context.to_string()),
            ("citation_sentence", citation_sentence.to_string()),
            ("citation_number", citation_number.to_string()),
        ],
    )
}

pub fn positioning_type_prompt(draft: &str) -> RenderedPrompt {
    render(TaskId::PositioningType, &[("draft", draft.to_string())])
}

pub fn positioning_direct_prompt(paragraph: &str) -> RenderedPrompt {
    render(TaskId::PositioningRatioDirect, &[("paragraph", paragraph.to_string())])
}

pub fn positioning_pairwise_prompt(context: &str, final_paragraph: &str) -> RenderedPrompt {
    render(
        TaskId::PositioningRatioPairwise,
        &[
            ("context_paragraph", context.to_string()),
            ("final_paragraph", final_paragraph.to_string()),
        ],
    )
}

pub fn feedback_prompt(report: &str) -> RenderedPrompt {
    render(TaskId::Feedback, &[("evaluation_report", report.to_string())])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coherence_layout() {
        let p = coherence_prompt("CTX", "A sentence [3].", 3);
        assert!(p.user.ends_with("PAPER CONTEXT: CTX\n\nCITATION SENTENCE: A sentence [3].\n\nCITATION PAPER: 3"));
        assert!(p.user.starts_with("<START OF EXAMPLE 1>\n\nPAPER CONTEXT: Neural Architecture Search"));
        assert!(p.system.ends_with("Your output should be in JSON format."));
    }

    #[test]
    fn positioning_type_has_three_examples_in_order() {
        let p = positioning_type_prompt("D");
        let positions: Vec<_> = (1..=3)
            .map(|i| p.user.find(&format!("<START OF EXAMPLE {i}>")).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        for ex in &PromptTemplate::get(TaskId::PositioningType).few_shot {
            assert!(p.user.contains(ex));
        }
        assert!(p.user.contains("ANSWER: 2") && p.user.contains("ANSWER: 1") && p.user.contains("ANSWER: 3"));
    }

    #[test]
    fn missing_slot_is_named() {
        let err = PromptTemplate::get(TaskId::Coherence).render(&BTreeMap::new()).unwrap_err();
        assert_eq!(
            err,
            TemplateError::MissingSlot {
                task: "coherence",
                slot: "paper_context".into()
            }
        );
    }

    #[test]
    fn slot_values_are_not_rescanned() {
        let p = positioning_direct_prompt("uses {paper_context} and {x literally");
        assert!(p.user.ends_with("DRAFT: uses {paper_context} and {x literally"));
    }

    #[test]
    fn rendering_is_byte_stable() {
        assert_eq!(coherence_prompt("a", "b", 1), coherence_prompt("a", "b", 1));
        assert_ne!(
            coherence_prompt("a", "b", 1).fingerprint(),
            coherence_prompt("a", "b", 2).fingerprint()
        );
    }

    #[test]
    fn draft_system_has_contribution_slot() {
        for task in [TaskId::DraftFirst, TaskId::DraftRevise] {
            assert!(PromptTemplate::get(task).system.contains("{contribution_information}"));
        }
    }
}
