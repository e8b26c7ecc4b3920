//! LLM judge: repeated sampling, structured-verdict parsing and majority vote.

pub mod prompts;
mod stub;

use std::sync::Arc;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::llm::{ChatBackend, ChatRequest, EndpointConfig, OpenAiChat, RetryPolicy, StructuredOutput, TransportError};
use crate::par::Parallelism;
pub use prompts::{RenderedPrompt, TaskId};
pub use stub::{StubBackend, StubJudge};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub endpoint: EndpointConfig,
    pub temperature: f64,
    /// Reasoning models that reject a temperature parameter.
    pub fixed_temperature: bool,
    pub repetitions: usize,
    pub retry: RetryPolicy,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            endpoint: EndpointConfig {
                base_url: "http://localhost:8000/v1".into(),
                model: "judge".into(),
                api_key_env: Some("OPENAI_API_KEY".into()),
                timeout: Duration::from_secs(120),
                structured: StructuredOutput::JsonSchema,
                concurrency_limit: 8,
            },
            temperature: 0.8,
            fixed_temperature: false,
            repetitions: 3,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum JudgeError {
    #[error("invalid judge configuration: {0}")]
    Config(String),
    #[error("judge unavailable: all {attempts} samples failed (last error: {last})")]
    Unavailable { attempts: usize, last: String },
    #[error(transparent)]
    Transport(#[from] TransportError),
}

impl JudgeConfig {
    pub fn validate(&self) -> Result<(), JudgeError> {
        if self.repetitions == 0 || self.repetitions.is_multiple_of(2) {
            return Err(JudgeError::Config(format!(
                "repetitions must be odd, got {}",
                self.repetitions
            )));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(JudgeError::Config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.endpoint.concurrency_limit == 0 {
            return Err(JudgeError::Config("concurrency_limit must be >= 1".into()));
        }
        Ok(())
    }
}

/// Allowed answers for one task plus the answer chosen when votes split evenly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerDomain {
    pub values: &'static [&'static str],
    pub tie_break: &'static str,
}

impl AnswerDomain {
    pub const BINARY: AnswerDomain = AnswerDomain {
        values: &["yes", "no"],
        tie_break: "no",
    };
    pub const POSITIONING: AnswerDomain = AnswerDomain {
        values: &["1", "2", "3"],
        tie_break: "3",
    };

    pub fn for_task(task: TaskId) -> AnswerDomain {
        match task {
            TaskId::PositioningType => Self::POSITIONING,
            _ => Self::BINARY,
        }
    }

    fn normalize(&self, raw: &str) -> Option<&'static str> {
        let cleaned = raw
            .trim()
            .trim_matches(|c: char| c == '"' || c == '\'' || c == '.' || c == '`')
            .trim()
            .to_lowercase();
        self.values.iter().copied().find(|v| *v == cleaned)
    }

    /// Last standalone occurrence of a domain token in free text.
    fn last_token_in(&self, text: &str) -> Option<&'static str> {
        let alternatives = self.values.iter().map(|v| regex::escape(v)).collect::<Vec<_>>().join("|");
        let re = Regex::new(&format!(r"(?i)\b({alternatives})\b")).ok()?;
        let last = re.find_iter(text).last()?;
        self.normalize(last.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub reasoning: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub votes: Vec<Vote>,
    #[serde(rename = "final")]
    pub final_answer: String,
    /// The winning answer holds a strict majority of the configured repetitions.
    pub confident: bool,
    /// Samples that produced no usable vote.
    pub failures: usize,
}

impl JudgeVerdict {
    pub fn is(&self, answer: &str) -> bool {
        self.final_answer == answer
    }

    /// Reasoning of the first vote agreeing with the final answer.
    pub fn reasoning(&self) -> &str {
        self.votes
            .iter()
            .find(|v| v.answer == self.final_answer)
            .map_or("", |v| v.reasoning.as_str())
    }
}

/// Mode of `answers` over `domain`; an even split between the leaders resolves
/// to the domain's tie-break answer.
pub fn majority(answers: &[&str], domain: &AnswerDomain, repetitions: usize) -> (String, bool) {
    let counts: Vec<(&str, usize)> = domain
        .values
        .iter()
        .map(|v| (*v, answers.iter().filter(|a| *a == v).count()))
        .collect();
    let best = counts.iter().map(|c| c.1).max().unwrap_or(0);
    let leaders: Vec<&str> = counts.iter().filter(|c| c.1 == best).map(|c| c.0).collect();
    let answer = if leaders.len() == 1 { leaders[0] } else { domain.tie_break };
    let confident = leaders.len() == 1 && best * 2 > repetitions;
    (answer.to_string(), confident)
}

#[derive(Deserialize)]
struct StructuredVote {
    #[serde(default)]
    reasoning: String,
    answer: Value,
}

/// Parses one raw completion into a vote. Tries the structured object first
/// (optionally wrapped in a code fence), then falls back to the last domain
/// token anywhere in the text.
pub fn parse_vote(raw: &str, domain: &AnswerDomain) -> Option<Vote> {
    let trimmed = raw.trim();
    let unfenced = trimmed
        .strip_prefix("```json")
        .or_else(|| trimmed.strip_prefix("```"))
        .and_then(|s| s.strip_suffix("```"))
        .map_or(trimmed, str::trim);
    let json_slice = match (unfenced.find('{'), unfenced.rfind('}')) {
        (Some(a), Some(b)) if a < b => &unfenced[a..=b],
        _ => unfenced,
    };
    if let Ok(v) = serde_json::from_str::<StructuredVote>(json_slice) {
        let answer_text = match &v.answer {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        if let Some(answer) = domain.normalize(&answer_text).or_else(|| domain.last_token_in(&answer_text)) {
            return Some(Vote {
                reasoning: v.reasoning,
                answer: answer.to_string(),
            });
        }
    }
    domain.last_token_in(raw).map(|answer| Vote {
        reasoning: raw.trim().to_string(),
        answer: answer.to_string(),
    })
}

/// Shareable judge handle.
#[derive(Clone)]
pub struct Judge {
    config: JudgeConfig,
    backend: Arc<dyn ChatBackend>,
    parallelism: Parallelism,
}

impl std::fmt::Debug for Judge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Judge")
            .field("model", &self.config.endpoint.model)
            .field("repetitions", &self.config.repetitions)
            .field("parallelism", &self.parallelism)
            .finish()
    }
}

impl Judge {
    pub fn new(config: JudgeConfig, backend: Arc<dyn ChatBackend>) -> Result<Self, JudgeError> {
        config.validate()?;
        Ok(Self {
            config,
            backend,
            parallelism: Parallelism::default(),
        })
    }

    /// Judge backed by an OpenAI-compatible endpoint.
    pub fn remote(config: JudgeConfig) -> Result<Self, JudgeError> {
        config.validate()?;
        let backend = OpenAiChat::new(&config.endpoint)?;
        Self::new(config, Arc::new(backend))
    }

    pub fn with_parallelism(mut self, parallelism: Parallelism) -> Self {
        self.parallelism = parallelism;
        self
    }

    pub fn parallelism(&self) -> Parallelism {
        self.parallelism
    }

    pub fn config(&self) -> &JudgeConfig {
        &self.config
    }

    pub fn backend(&self) -> Arc<dyn ChatBackend> {
        self.backend.clone()
    }

    fn sample(&self, prompt: &RenderedPrompt, sample: usize) -> Result<String, TransportError> {
        let request = ChatRequest {
            task: prompt.task,
            system: prompt.system.clone(),
            user: prompt.user.clone(),
            temperature: (!self.config.fixed_temperature).then_some(self.config.temperature),
            structured: true,
            sample,
        };
        self.config.retry.run(|| self.backend.complete(&request))
    }

    /// Samples the judge `repetitions` times and takes the majority answer.
    ///
    /// A response whose answer falls outside `domain` is re-asked once; if the
    /// re-ask also fails the sample is counted as a failure. Only when every
    /// sample fails is an error returned.
    pub fn ask(&self, prompt: &RenderedPrompt, domain: &AnswerDomain) -> Result<JudgeVerdict, JudgeError> {
        let reps = self.config.repetitions;
        let mut votes = Vec::with_capacity(reps);
        let mut failures = 0;
        let mut last_error = String::new();
        for i in 0..reps {
            let mut vote = None;
            for sample in [i, reps + i] {
                match self.sample(prompt, sample) {
                    Ok(raw) => match parse_vote(&raw, domain) {
                        Some(v) => {
                            vote = Some(v);
                            break;
                        }
                        None => last_error = format!("answer outside {:?}", domain.values),
                    },
                    Err(e) => {
                        last_error = e.to_string();
                        // Transport errors were already retried; no semantic re-ask.
                        break;
                    }
                }
            }
            match vote {
                Some(v) => votes.push(v),
                None => failures += 1,
            }
        }
        if votes.is_empty() {
            return Err(JudgeError::Unavailable {
                attempts: reps,
                last: last_error,
            });
        }
        let answers: Vec<&str> = votes.iter().map(|v| v.answer.as_str()).collect();
        let (final_answer, confident) = majority(&answers, domain, reps);
        Ok(JudgeVerdict {
            votes,
            final_answer,
            confident,
            failures,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_eight_binary_vote_patterns() {
        for mask in 0..8u32 {
            let answers: Vec<&str> = (0..3).map(|b| if mask >> b & 1 == 1 { "yes" } else { "no" }).collect();
            let yes = mask.count_ones();
            let (ans, confident) = majority(&answers, &AnswerDomain::BINARY, 3);
            assert_eq!(ans, if yes >= 2 { "yes" } else { "no" }, "{answers:?}");
            assert!(confident);
        }
    }

    #[test]
    fn positioning_split_resolves_to_none_style() {
        let (ans, confident) = majority(&["1", "2", "3"], &AnswerDomain::POSITIONING, 3);
        assert_eq!(ans, "3");
        assert!(!confident);
        assert_eq!(majority(&["1", "1", "1"], &AnswerDomain::POSITIONING, 3), ("1".into(), true));
        assert_eq!(majority(&["2", "1", "2"], &AnswerDomain::POSITIONING, 3), ("2".into(), true));
    }

    #[test]
    fn single_repetition_is_its_own_majority() {
        assert_eq!(majority(&["no"], &AnswerDomain::BINARY, 1), ("no".into(), true));
    }

    #[test]
    fn partial_failures_lose_confidence() {
        let (ans, confident) = majority(&["yes", "no"], &AnswerDomain::BINARY, 3);
        assert_eq!(ans, "no");
        assert!(!confident);
        let (ans, confident) = majority(&["yes", "yes"], &AnswerDomain::BINARY, 3);
        assert_eq!(ans, "yes");
        assert!(confident);
    }

    #[test]
    fn parses_structured_and_lenient_answers() {
        let d = AnswerDomain::BINARY;
        assert_eq!(parse_vote(r#"{"reasoning": "r", "answer": "Yes"}"#, &d).unwrap().answer, "yes");
        assert_eq!(
            parse_vote("```json\n{\"reasoning\": \"r\", \"answer\": \"no.\"}\n```", &d).unwrap().answer,
            "no"
        );
        let v = parse_vote("REASONING: it fits, not a no.\nANSWER: Yes", &d).unwrap();
        assert_eq!(v.answer, "yes");
        assert!(parse_vote("I cannot decide", &d).is_none());
        let p = AnswerDomain::POSITIONING;
        assert_eq!(parse_vote(r#"{"reasoning": "x", "answer": 2}"#, &p).unwrap().answer, "2");
        assert_eq!(parse_vote(r#"{"reasoning": "x", "answer": "Type 1"}"#, &p).unwrap().answer, "1");
        assert!(parse_vote(r#"{"reasoning": "x", "answer": "4"}"#, &p).is_none());
    }

    #[test]
    fn config_validation() {
        let mut c = JudgeConfig::default();
        assert!(c.validate().is_ok());
        c.repetitions = 2;
        assert!(c.validate().is_err());
        c.repetitions = 1;
        c.temperature = -0.1;
        assert!(c.validate().is_err());
    }
}
