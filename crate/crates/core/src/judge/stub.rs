//! Scripted, network-free judge backend.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde_json::json;

use super::{Judge, JudgeConfig, RenderedPrompt, TaskId};
use crate::llm::{ChatBackend, ChatRequest, RetryPolicy, TransportError};

type Responder = dyn Fn(&ChatRequest) -> Option<String> + Send + Sync;

#[derive(Clone)]
enum Scripted {
    /// Raw completions, replayed by sample index.
    Raw(Vec<String>),
    Fail,
}

/// Backend answering from a fingerprint-keyed script.
///
/// Lookup order: exact prompt fingerprint, then the responder closure, then
/// the per-task default, then the global default.
pub struct StubBackend {
    script: HashMap<String, Scripted>,
    responder: Option<Arc<Responder>>,
    task_defaults: BTreeMap<TaskId, String>,
    default: String,
    calls: AtomicUsize,
}

impl StubBackend {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

fn structured(answer: &str, fp: &str) -> String {
    json!({
        "reasoning": format!("Scripted verdict for prompt {}.", &fp[..12]),
        "answer": answer,
    })
    .to_string()
}

impl ChatBackend for StubBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let fp = super::prompts::fingerprint(request.task, &request.system, &request.user);
        match self.script.get(&fp) {
            Some(Scripted::Raw(seq)) if !seq.is_empty() => return Ok(seq[request.sample % seq.len()].clone()),
            Some(Scripted::Fail) => return Err(TransportError::Request("scripted failure".into())),
            _ => {}
        }
        let answer = self
            .responder
            .as_ref()
            .and_then(|r| r(request))
            .or_else(|| self.task_defaults.get(&request.task).cloned())
            .unwrap_or_else(|| self.default.clone());
        Ok(structured(&answer, &fp))
    }
}

/// Builder for a [`Judge`] over a [`StubBackend`].
pub struct StubJudge {
    backend: StubBackend,
    repetitions: usize,
}

impl Default for StubJudge {
    fn default() -> Self {
        Self::new("yes")
    }
}

impl StubJudge {
    /// Every unscripted prompt is answered with `default`.
    pub fn new(default: &str) -> Self {
        Self {
            backend: StubBackend {
                script: HashMap::new(),
                responder: None,
                task_defaults: BTreeMap::new(),
                default: default.to_string(),
                calls: AtomicUsize::new(0),
            },
            repetitions: 3,
        }
    }

    pub fn task_default(mut self, task: TaskId, answer: &str) -> Self {
        self.backend.task_defaults.insert(task, answer.to_string());
        self
    }

    /// Answer `prompt` with `answers[sample % len]`, one per repeated sample.
    pub fn script<I, S>(mut self, prompt: &RenderedPrompt, answers: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let fp = prompt.fingerprint();
        let raw = answers.into_iter().map(|a| structured(a.as_ref(), &fp)).collect();
        self.backend.script.insert(fp, Scripted::Raw(raw));
        self
    }

    /// Reply to `prompt` with these raw completions, verbatim.
    pub fn script_raw<I, S>(mut self, prompt: &RenderedPrompt, raw: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let raw = raw.into_iter().map(Into::into).collect();
        self.backend.script.insert(prompt.fingerprint(), Scripted::Raw(raw));
        self
    }

    pub fn fail(mut self, prompt: &RenderedPrompt) -> Self {
        self.backend.script.insert(prompt.fingerprint(), Scripted::Fail);
        self
    }

    pub fn responder(mut self, f: impl Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static) -> Self {
        self.backend.responder = Some(Arc::new(f));
        self
    }

    pub fn repetitions(mut self, n: usize) -> Self {
        self.repetitions = n;
        self
    }

    pub fn build(self) -> Judge {
        self.build_with_backend().0
    }

    /// Also returns the backend so tests can count calls.
    pub fn build_with_backend(self) -> (Judge, Arc<StubBackend>) {
        let config = JudgeConfig {
            repetitions: self.repetitions,
            retry: RetryPolicy::immediate(3),
            ..JudgeConfig::default()
        };
        let backend = Arc::new(self.backend);
        let judge = Judge::new(config, backend.clone()).expect("stub judge config is valid");
        (judge, backend)
    }
}
