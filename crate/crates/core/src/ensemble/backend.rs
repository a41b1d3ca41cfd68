//! Model backends: the trait the ensemble runner calls, an HTTP client
//! for OpenAI-style chat-completion APIs, and a scripted mock for
//! offline, deterministic runs.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::TaskKind;

/// Which seat in the ensemble is asking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleRole {
    WorkerA,
    WorkerB,
    Integrator,
}

impl EnsembleRole {
    pub fn name(self) -> &'static str {
        match self {
            EnsembleRole::WorkerA => "worker_a",
            EnsembleRole::WorkerB => "worker_b",
            EnsembleRole::Integrator => "integrator",
        }
    }
}

/// Task coordinates attached to a request so scripted backends can route
/// responses without parsing prompt text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskRoute {
    pub task_kind: TaskKind,
    pub input_hash: String,
}

/// One single-turn completion request. Every exchange is stateless: any
/// needed context (prior responses, errors) is embedded in `user`.
#[derive(Debug, Clone)]
pub struct CompletionRequest {
    pub role: EnsembleRole,
    pub system: String,
    pub user: String,
    pub route: Option<TaskRoute>,
    /// Task-provided key/value context (episode, speaker, ...). Scripted
    /// backends match rules against it.
    pub meta: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct CompletionResponse {
    pub text: String,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend returned HTTP {status}: {message}")]
    Http { status: u16, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("API key environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("mock script has no response for {key}")]
    ScriptMiss { key: String },
    #[error("mock script error: {0}")]
    Script(String),
    #[error("backend response not understood: {0}")]
    BadResponse(String),
}

impl BackendError {
    /// Whether retrying the same request may succeed: rate limits,
    /// server-side failures, and transport drops qualify; configuration
    /// and script problems do not.
    pub fn retryable(&self) -> bool {
        match self {
            BackendError::Http { status, .. } => *status == 429 || *status >= 500,
            BackendError::Transport(_) => true,
            _ => false,
        }
    }
}

/// A completion provider usable as any ensemble seat.
pub trait LlmBackend: Send + Sync {
    /// Stable identifier recorded in ensemble records; two seats must
    /// never share one.
    fn identity(&self) -> String;
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError>;
}

// ---------------------------------------------------------------------------
// HTTP backend
// ---------------------------------------------------------------------------

/// Client for OpenAI-style `POST {base_url}/chat/completions` endpoints.
///
/// The API key is read from the named environment variable at call time —
/// never from configuration files or flags — and appears only in the
/// `Authorization` header, never in logs or errors.
pub struct HttpBackend {
    base_url: String,
    model: String,
    api_key_env: String,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(base_url: &str, model: &str, api_key_env: &str) -> Self {
        HttpBackend {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key_env: api_key_env.to_string(),
            client: reqwest::blocking::Client::new(),
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

fn truncate_message(text: &str) -> String {
    const LIMIT: usize = 500;
    if text.len() <= LIMIT {
        return text.to_string();
    }
    let mut end = LIMIT;
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}…", &text[..end])
}

impl LlmBackend for HttpBackend {
    fn identity(&self) -> String {
        format!("{}#{}", self.base_url, self.model)
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let key = std::env::var(&self.api_key_env)
            .map_err(|_| BackendError::MissingApiKey(self.api_key_env.clone()))?;
        let body = ChatRequest {
            model: &self.model,
            messages: vec![
                ChatMessage {
                    role: "system",
                    content: &request.system,
                },
                ChatMessage {
                    role: "user",
                    content: &request.user,
                },
            ],
            temperature: 0.0,
        };
        let response = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(key)
            .json(&body)
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Http {
                status,
                message: truncate_message(&text),
            });
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| BackendError::BadResponse(e.to_string()))?;
        let first = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::BadResponse("response has no choices".into()))?;
        Ok(CompletionResponse {
            text: first.message.content,
        })
    }
}

// ---------------------------------------------------------------------------
// Scripted mock backend
// ---------------------------------------------------------------------------

/// A canned response script, shared by the mock seats of one run.
///
/// JSON shape:
///
/// ```json
/// {
///   "entries": {
///     "segment/<input_hash>": { "worker_a": "...", "worker_b": "...", "integrator": "..." }
///   },
///   "rules": [
///     {
///       "task": "summarize",
///       "when": { "substring": "Speaker to summarize: Alex", "meta": { "episode": "ep052" } },
///       "worker_a": "...", "worker_b": ["first call", "later calls"], "integrator": {"summary": null}
///     }
///   ]
/// }
/// ```
///
/// Responses may be a string (returned verbatim), an array (consumed one
/// element per call, the last repeating — for exercising repair loops), or
/// any other JSON value (serialized compactly). Exact-hash entries win
/// over rules; rules are tried in order and the first match that defines
/// the requested role is used.
#[derive(Debug, Default, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    entries: BTreeMap<String, RoleResponses>,
    #[serde(default)]
    rules: Vec<MockRule>,
    /// Per-(source, role) call counts, for array responses.
    #[serde(skip)]
    counters: Mutex<BTreeMap<(String, String), usize>>,
}

#[derive(Debug, Default, Deserialize)]
pub struct RoleResponses {
    #[serde(default)]
    worker_a: Option<Value>,
    #[serde(default)]
    worker_b: Option<Value>,
    #[serde(default)]
    integrator: Option<Value>,
}

impl RoleResponses {
    fn get(&self, role: EnsembleRole) -> Option<&Value> {
        match role {
            EnsembleRole::WorkerA => self.worker_a.as_ref(),
            EnsembleRole::WorkerB => self.worker_b.as_ref(),
            EnsembleRole::Integrator => self.integrator.as_ref(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct MockRule {
    #[serde(default)]
    task: Option<String>,
    #[serde(default)]
    when: MockCondition,
    #[serde(flatten)]
    responses: RoleResponses,
}

#[derive(Debug, Default, Deserialize)]
struct MockCondition {
    /// Must appear in the request's user or system text.
    #[serde(default)]
    substring: Option<String>,
    /// Every listed pair must be present in the request's meta.
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

impl MockRule {
    fn matches(&self, request: &CompletionRequest) -> bool {
        if let Some(task) = &self.task {
            let kind = request.route.as_ref().map(|r| r.task_kind.name());
            if kind != Some(task.as_str()) {
                return false;
            }
        }
        if let Some(needle) = &self.when.substring {
            if !request.user.contains(needle.as_str())
                && !request.system.contains(needle.as_str())
            {
                return false;
            }
        }
        self.when
            .meta
            .iter()
            .all(|(k, v)| request.meta.get(k) == Some(v))
    }
}

impl MockScript {
    pub fn from_json(json: &str) -> Result<MockScript, BackendError> {
        serde_json::from_str(json).map_err(|e| BackendError::Script(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<MockScript, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Script(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn render(&self, source: &str, role: EnsembleRole, value: &Value) -> Result<String, BackendError> {
        let stringify = |v: &Value| -> Result<String, BackendError> {
            match v {
                Value::String(s) => Ok(s.clone()),
                other => serde_json::to_string(other).map_err(|e| BackendError::Script(e.to_string())),
            }
        };
        match value {
            Value::Array(items) => {
                if items.is_empty() {
                    return Err(BackendError::Script(format!(
                        "empty response array at {source} for {}",
                        role.name()
                    )));
                }
                let mut counters = self.counters.lock().expect("mock counters");
                let count = counters
                    .entry((source.to_string(), role.name().to_string()))
                    .or_insert(0);
                let index = (*count).min(items.len() - 1);
                *count += 1;
                stringify(&items[index])
            }
            other => stringify(other),
        }
    }

    fn lookup(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let role = request.role;
        if let Some(route) = &request.route {
            let key = format!("{}/{}", route.task_kind.name(), route.input_hash);
            if let Some(entry) = self.entries.get(&key) {
                if let Some(value) = entry.get(role) {
                    return self.render(&key, role, value);
                }
            }
        }
        for (index, rule) in self.rules.iter().enumerate() {
            if rule.matches(request) {
                if let Some(value) = rule.responses.get(role) {
                    return self.render(&format!("rule#{index}"), role, value);
                }
            }
        }
        let key = match &request.route {
            Some(route) => format!("{}/{}#{}", route.task_kind.name(), route.input_hash, role.name()),
            None => format!("<unrouted>#{}", role.name()),
        };
        Err(BackendError::ScriptMiss { key })
    }
}

/// One mock seat, drawing from a shared script.
pub struct MockBackend {
    role: EnsembleRole,
    script: Arc<MockScript>,
}

impl MockBackend {
    pub fn new(role: EnsembleRole, script: Arc<MockScript>) -> Self {
        MockBackend { role, script }
    }

    /// The standard three seats over one shared script.
    pub fn trio(script: Arc<MockScript>) -> (MockBackend, MockBackend, MockBackend) {
        (
            MockBackend::new(EnsembleRole::WorkerA, Arc::clone(&script)),
            MockBackend::new(EnsembleRole::WorkerB, Arc::clone(&script)),
            MockBackend::new(EnsembleRole::Integrator, script),
        )
    }
}

impl LlmBackend for MockBackend {
    fn identity(&self) -> String {
        format!("mock:{}", self.role.name())
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        self.script
            .lookup(request)
            .map(|text| CompletionResponse { text })
    }
}
