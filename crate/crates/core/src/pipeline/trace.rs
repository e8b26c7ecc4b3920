//! Run traces and their on-disk form.
//!
//! One JSON file per (generator, paper, scenario), named
//! `{generator}__{paper}__{scenario}.json`, tagged with [`TRACE_SCHEMA`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EvaluationReport, PipelineError, RunConfig};
use crate::metrics::PositioningStyle;
use crate::textops::CitationIndex;

pub const TRACE_SCHEMA: &str = "rwgrade.run-trace/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub provided: Vec<CitationIndex>,
    pub held_out: Vec<CitationIndex>,
    pub expected_style: PositioningStyle,
    pub draft: String,
    pub report: EvaluationReport,
    /// Absent after the last iteration.
    pub feedback: Option<String>,
    pub feedback_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub schema: String,
    pub generator: String,
    pub paper_id: String,
    pub config: RunConfig,
    pub iterations: Vec<IterationRecord>,
    /// Set when the generator failed and the run stopped early.
    pub truncated: Option<String>,
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

pub fn trace_file_name(generator: &str, paper_id: &str, scenario: &str) -> String {
    format!("{}__{}__{}.json", sanitize(generator), sanitize(paper_id), sanitize(scenario))
}

impl RunTrace {
    pub fn new(generator: &str, paper_id: &str, config: RunConfig) -> Self {
        Self {
            schema: TRACE_SCHEMA.into(),
            generator: generator.into(),
            paper_id: paper_id.into(),
            config,
            iterations: Vec::new(),
            truncated: None,
        }
    }

    pub fn reports(&self) -> impl Iterator<Item = &EvaluationReport> {
        self.iterations.iter().map(|i| &i.report)
    }

    pub fn feedback_count(&self) -> usize {
        self.iterations.iter().filter(|i| i.feedback.is_some()).count()
    }

    pub fn file_name(&self) -> String {
        trace_file_name(&self.generator, &self.paper_id, self.config.scenario.as_str())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let trace: RunTrace = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if trace.schema != TRACE_SCHEMA {
            return Err(format!("unsupported schema `{}`", trace.schema));
        }
        Ok(trace)
    }

    /// Writes the trace into `dir` and returns the file path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf, PipelineError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| PipelineError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let path = dir.join(self.file_name());
        std::fs::write(&path, self.to_json() + "\n").map_err(io(&path))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text).map_err(|message| PipelineError::Trace {
            path: path.display().to_string(),
            message,
        })
    }
}
