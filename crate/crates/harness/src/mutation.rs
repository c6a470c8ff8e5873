//! Mutation through a chat-completion service: parents' source goes out,
//! the first fenced code block of the reply becomes the child program.

use std::path::{Path, PathBuf};
use std::time::Duration;

use improvevolve_core::evolution::{LaunchSpec, MutationContext, Mutator, Payload};
use improvevolve_core::ProblemKind;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationRequest {
    pub parent_sources: Vec<String>,
    pub context: String,
    pub constraints: String,
}

fn default_temperature() -> f64 {
    1.0
}

fn default_timeout() -> f64 {
    300.0
}

/// Chat-completion endpoint. Read from JSON; the API key comes from the
/// named environment variable, never from the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            temperature: default_temperature(),
            api_key_env: None,
            timeout_secs: default_timeout(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MutationError {
    #[error("at least one parent source is required")]
    NoParents,
    #[error("network failure: {0}")]
    Network(String),
    #[error("unexpected reply: {0}")]
    BadReply(String),
    #[error("reply has no fenced code block")]
    NoCodeBlock,
    #[error("cannot write candidate: {0}")]
    Io(String),
}

const SYSTEM_PROMPT: &str = "You improve optimization programs. Reply with one complete Python program in a single fenced code block.";

pub fn build_chat_body(req: &MutationRequest, cfg: &EndpointConfig) -> Value {
    let mut prompt = String::new();
    for (k, src) in req.parent_sources.iter().enumerate() {
        prompt += &format!("Parent program {k}:\n```python\n{}\n```\n\n", src.trim_end());
    }
    prompt += &format!("Context:\n{}\n\nRequirements:\n{}\n", req.context.trim_end(), req.constraints.trim_end());
    json!({
        "model": cfg.model,
        "temperature": cfg.temperature,
        "messages": [
            { "role": "system", "content": SYSTEM_PROMPT },
            { "role": "user", "content": prompt },
        ],
    })
}

/// Body of the first ``` fence, without its info string.
pub fn extract_code_block(text: &str) -> Option<String> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    let body_start = after.find('\n')? + 1;
    let body = &after[body_start..];
    let end = body.find("```")?;
    let code = body[..end].trim_end_matches(['\n', '\r']);
    (!code.trim().is_empty()).then(|| format!("{code}\n"))
}

/// Sends one request and returns the child source.
pub fn mutation_service_call(req: &MutationRequest, cfg: &EndpointConfig) -> Result<String, MutationError> {
    if req.parent_sources.is_empty() {
        return Err(MutationError::NoParents);
    }
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs.max(0.001))))
        .build()
        .into();
    let url = format!("{}/chat/completions", cfg.base_url.trim_end_matches('/'));
    let mut request = agent.post(&url).header("Content-Type", "application/json");
    if let Some(var) = &cfg.api_key_env {
        let key = std::env::var(var).map_err(|_| MutationError::Network(format!("environment variable {var} is not set")))?;
        request = request.header("Authorization", &format!("Bearer {key}"));
    }
    let mut response = request
        .send_json(build_chat_body(req, cfg))
        .map_err(|e| MutationError::Network(e.to_string()))?;
    let reply: Value = response.body_mut().read_json().map_err(|e| MutationError::BadReply(e.to_string()))?;
    let content = reply
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| MutationError::BadReply("no choices[0].message.content".into()))?;
    extract_code_block(content).ok_or(MutationError::NoCodeBlock)
}

/// Interface text every child must satisfy.
pub fn constraints_for(problem: ProblemKind) -> String {
    match problem {
        ProblemKind::Hex { n } => format!(
            "Define `def entrypoint(): return Improver` where `Improver(hex_num, seed)` packs {n} unit regular hexagons \
             into the smallest flat-topped regular hexagon. Methods: `generate_config()` returns `(centers, angles)` with \
             centers of shape ({n}, 2) and angles of shape ({n},) in radians; `improve(input_config, seed=None)` returns \
             a refined configuration of the same shapes; `perturb(input_config, intensity, seed=None)` returns a randomly \
             moved configuration. Hexagons must not overlap. Lower side length is better."
        ),
        ProblemKind::Aci { resolution } => format!(
            "Define `def entrypoint(): return Improver` where `Improver(seed)` optimizes a non-negative step function f \
             on [-1/4, 1/4] given as an array of samples (initial resolution {resolution}). Methods: `generate_config()` \
             returns a 1-D array; `improve(input_f)` returns a refined array; `perturb(input_f, intensity, seed=None)` \
             returns a perturbed array. Values must be finite, non-negative and not all zero. Maximize \
             C = ||f*f||_2^2 / (||f*f||_1 ||f*f||_inf)."
        ),
    }
}

/// Command that runs a Python improver through the shim.
pub fn shim_launch(shim: &[String], source: &Path, problem: ProblemKind) -> LaunchSpec {
    let mut command = shim.to_vec();
    command.push("--source".into());
    command.push(source.display().to_string());
    match problem {
        ProblemKind::Hex { n } => {
            command.extend(["--problem".into(), "hex".into(), "--n".into(), n.to_string()]);
        }
        ProblemKind::Aci { resolution } => {
            command.extend(["--problem".into(), "aci".into(), "--resolution".into(), resolution.to_string()]);
        }
    }
    LaunchSpec { command, working_dir: None, source: None }
}

pub fn default_shim_command() -> Vec<String> {
    vec!["python3".into(), "-m".into(), "improvevolve_shim".into()]
}

/// Writes `source` as a candidate program and returns its launch spec.
pub fn write_candidate(
    dir: &Path,
    source: &str,
    shim: &[String],
    problem: ProblemKind,
) -> Result<LaunchSpec, MutationError> {
    std::fs::create_dir_all(dir).map_err(|e| MutationError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join("candidate.py");
    std::fs::write(&path, source).map_err(|e| MutationError::Io(format!("{}: {e}", path.display())))?;
    let path = path.canonicalize().unwrap_or(path);
    Ok(LaunchSpec { source: Some(source.to_string()), ..shim_launch(shim, &path, problem) })
}

/// Mutator backed by a chat-completion endpoint. Children land in
/// `<candidates_dir>/child-<seed>/candidate.py`.
#[derive(Debug, Clone)]
pub struct ServiceMutator {
    pub problem: ProblemKind,
    pub endpoint: EndpointConfig,
    pub candidates_dir: PathBuf,
    pub shim: Vec<String>,
}

impl ServiceMutator {
    pub fn request(&self, ctx: &MutationContext) -> MutationRequest {
        let parent_sources = ctx
            .parents
            .iter()
            .filter_map(|c| match &c.payload {
                Payload::ExternalProcess { launch } => launch.source.clone(),
                Payload::BuiltinParametric { .. } => None,
            })
            .collect();
        MutationRequest { parent_sources, context: ctx.to_text(), constraints: constraints_for(self.problem) }
    }
}

impl Mutator for ServiceMutator {
    fn mutate(&self, ctx: &MutationContext, seed: u64) -> Result<Payload, String> {
        let req = self.request(ctx);
        let source = mutation_service_call(&req, &self.endpoint).map_err(|e| e.to_string())?;
        let dir = self.candidates_dir.join(format!("child-{seed:016x}"));
        let launch = write_candidate(&dir, &source, &self.shim, self.problem).map_err(|e| e.to_string())?;
        Ok(Payload::ExternalProcess { launch })
    }
}
