//! Settings resolution: command-line flags, then environment variables
//! (handled by clap), then the optional TOML file, then built-in defaults.

use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::Args;
use rwgrade_core::judge::JudgeConfig;
use rwgrade_core::llm::{EndpointConfig, RetryPolicy, StructuredOutput};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Contents of the `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub corpus: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub iterations: Option<usize>,
    pub scenario: Option<String>,
    pub tolerance: Option<f64>,
    pub holdout_fraction: Option<f64>,
    pub intervention_iteration: Option<usize>,
    pub style: Option<String>,
    #[serde(default)]
    pub judge: FileEndpoint,
    #[serde(default)]
    pub generator: FileEndpoint,
    #[serde(default)]
    pub feedback: FileEndpoint,
    #[serde(default)]
    pub arena: FileArena,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEndpoint {
    pub url: Option<String>,
    pub model: Option<String>,
    pub key_env: Option<String>,
    pub structured: Option<StructuredOutput>,
    pub timeout_secs: Option<f64>,
    pub concurrency: Option<usize>,
    pub temperature: Option<f64>,
    pub repetitions: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileArena {
    pub addr: Option<String>,
    pub dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Judge, generator and feedback endpoint flags.
#[derive(Debug, Clone, Default, Args)]
pub struct EndpointArgs {
    /// Judge base URL, e.g. http://localhost:8000/v1.
    #[arg(long, env = "RWGRADE_JUDGE_URL")]
    pub judge_url: Option<String>,
    #[arg(long, env = "RWGRADE_JUDGE_MODEL")]
    pub judge_model: Option<String>,
    /// Name of the environment variable that holds the judge API key.
    #[arg(long, env = "RWGRADE_JUDGE_KEY_ENV")]
    pub judge_key_env: Option<String>,
    /// How a structured verdict is requested: json-schema, json-object or none.
    #[arg(long, env = "RWGRADE_JUDGE_STRUCTURED", value_parser = parse_structured)]
    pub judge_structured: Option<StructuredOutput>,
    #[arg(long, env = "RWGRADE_JUDGE_REPETITIONS")]
    pub judge_repetitions: Option<usize>,
    #[arg(long, env = "RWGRADE_JUDGE_TEMPERATURE")]
    pub judge_temperature: Option<f64>,

    #[arg(long, env = "RWGRADE_GENERATOR_URL")]
    pub generator_url: Option<String>,
    #[arg(long, env = "RWGRADE_GENERATOR_MODEL")]
    pub generator_model: Option<String>,
    #[arg(long, env = "RWGRADE_GENERATOR_KEY_ENV")]
    pub generator_key_env: Option<String>,

    /// Feedback writer; defaults to the judge endpoint.
    #[arg(long, env = "RWGRADE_FEEDBACK_URL")]
    pub feedback_url: Option<String>,
    #[arg(long, env = "RWGRADE_FEEDBACK_MODEL")]
    pub feedback_model: Option<String>,
    #[arg(long, env = "RWGRADE_FEEDBACK_KEY_ENV")]
    pub feedback_key_env: Option<String>,

    /// Request timeout in seconds for every endpoint.
    #[arg(long, env = "RWGRADE_TIMEOUT_SECS")]
    pub timeout_secs: Option<f64>,
}

fn parse_structured(s: &str) -> Result<StructuredOutput, String> {
    match s {
        "json-schema" => Ok(StructuredOutput::JsonSchema),
        "json-object" => Ok(StructuredOutput::JsonObject),
        "none" => Ok(StructuredOutput::None),
        other => Err(format!("unknown structured-output mode `{other}`")),
    }
}

/// A resolved endpoint as recorded in run manifests. Holds the name of the
/// key variable, never the key.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Endpoint {
    pub url: String,
    pub model: String,
    pub key_env: Option<String>,
    pub structured: StructuredOutput,
    pub timeout_secs: f64,
    pub concurrency: usize,
    pub temperature: Option<f64>,
}

impl Endpoint {
    pub fn config(&self) -> EndpointConfig {
        EndpointConfig {
            base_url: self.url.clone(),
            model: self.model.clone(),
            api_key_env: self.key_env.clone(),
            timeout: Duration::from_secs_f64(self.timeout_secs),
            structured: self.structured,
            concurrency_limit: self.concurrency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Endpoints {
    pub judge: Endpoint,
    pub judge_repetitions: usize,
    pub generator: Endpoint,
    pub feedback: Endpoint,
}

impl Endpoints {
    pub fn judge_config(&self) -> JudgeConfig {
        JudgeConfig {
            endpoint: self.judge.config(),
            temperature: self.judge.temperature.unwrap_or(0.8),
            fixed_temperature: false,
            repetitions: self.judge_repetitions,
            retry: RetryPolicy::default(),
        }
    }
}

fn required(value: Option<String>, what: &str, flag: &str, env: &str) -> Result<String, CliError> {
    value.filter(|v| !v.trim().is_empty()).ok_or_else(|| {
        CliError::Config(format!("{what} is not configured; pass --{flag}, set {env}, or use --stub"))
    })
}

impl EndpointArgs {
    /// Fills gaps from the file and checks that judge and generator are set.
    pub fn resolve(&self, file: &FileConfig) -> Result<Endpoints, CliError> {
        let timeout_secs = self
            .timeout_secs
            .or(file.judge.timeout_secs)
            .unwrap_or(120.0);
        if !(timeout_secs > 0.0 && timeout_secs.is_finite()) {
            return Err(CliError::Config(format!("timeout must be positive, got {timeout_secs}")));
        }
        let j = &file.judge;
        let judge = Endpoint {
            url: required(self.judge_url.clone().or(j.url.clone()), "judge endpoint", "judge-url", "RWGRADE_JUDGE_URL")?,
            model: required(
                self.judge_model.clone().or(j.model.clone()),
                "judge model",
                "judge-model",
                "RWGRADE_JUDGE_MODEL",
            )?,
            key_env: self.judge_key_env.clone().or(j.key_env.clone()),
            structured: self.judge_structured.or(j.structured).unwrap_or_default(),
            timeout_secs,
            concurrency: j.concurrency.unwrap_or(8),
            temperature: Some(self.judge_temperature.or(j.temperature).unwrap_or(0.8)),
        };
        let g = &file.generator;
        let generator = Endpoint {
            url: required(
                self.generator_url.clone().or(g.url.clone()),
                "generator endpoint",
                "generator-url",
                "RWGRADE_GENERATOR_URL",
            )?,
            model: required(
                self.generator_model.clone().or(g.model.clone()),
                "generator model",
                "generator-model",
                "RWGRADE_GENERATOR_MODEL",
            )?,
            key_env: self.generator_key_env.clone().or(g.key_env.clone()),
            structured: StructuredOutput::None,
            timeout_secs: self.timeout_secs.or(g.timeout_secs).unwrap_or(timeout_secs),
            concurrency: g.concurrency.unwrap_or(8),
            temperature: g.temperature,
        };
        let f = &file.feedback;
        let feedback = Endpoint {
            url: self.feedback_url.clone().or(f.url.clone()).unwrap_or_else(|| judge.url.clone()),
            model: self
                .feedback_model
                .clone()
                .or(f.model.clone())
                .unwrap_or_else(|| judge.model.clone()),
            key_env: self
                .feedback_key_env
                .clone()
                .or(f.key_env.clone())
                .or_else(|| judge.key_env.clone()),
            structured: StructuredOutput::None,
            timeout_secs: self.timeout_secs.or(f.timeout_secs).unwrap_or(timeout_secs),
            concurrency: f.concurrency.unwrap_or(8),
            temperature: f.temperature,
        };
        Ok(Endpoints {
            judge_repetitions: self.judge_repetitions.or(j.repetitions).unwrap_or(3),
            judge,
            generator,
            feedback,
        })
    }
}
