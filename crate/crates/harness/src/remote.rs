//! HTTP adapters for tool and planner services. JSON over POST, optional
//! bearer token, per-request timeout, exponential backoff on transport
//! errors and retryable statuses.

use std::collections::{BTreeMap, BTreeSet};
use std::thread::sleep;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use vidagent_core::planner::{Message, PlannerBackend, PlannerError, PlannerRequest};
use vidagent_core::protocol::{ParamMap, TimeWindow, ToolId};
use vidagent_core::tools::{BackendError, BackendResponse, Payload, ResolvedCall, ToolBackend, VideoRegistry};

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub url: String,
    /// Bearer token, usually read from an environment variable.
    pub token: Option<String>,
    pub timeout: Duration,
    /// Attempts after the first one.
    pub retries: u32,
    pub backoff: Duration,
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>) -> Self {
        EndpointConfig {
            url: url.into(),
            token: None,
            timeout: Duration::from_secs(60),
            retries: 3,
            backoff: Duration::from_millis(200),
        }
    }

    /// Reads the token from `var`; an unset or empty variable means no token.
    pub fn with_token_env(mut self, var: &str) -> Self {
        self.token = std::env::var(var).ok().filter(|t| !t.is_empty());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RemoteError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("timeout: {0}")]
    Timeout(String),
    #[error("status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("MalformedResponse: {0}")]
    MalformedResponse(String),
    #[error("remote error: {0}")]
    Remote(String),
}

impl RemoteError {
    fn retryable(&self) -> bool {
        match self {
            RemoteError::Transport(_) | RemoteError::Timeout(_) => true,
            RemoteError::Status { status, .. } => *status == 429 || *status >= 500,
            RemoteError::MalformedResponse(_) | RemoteError::Remote(_) => false,
        }
    }
}

#[derive(Debug, Clone)]
struct Endpoint {
    client: Client,
    config: EndpointConfig,
}

impl Endpoint {
    fn new(config: EndpointConfig) -> Result<Self, RemoteError> {
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| RemoteError::Transport(e.to_string()))?;
        Ok(Endpoint { client, config })
    }

    fn once<B: Serialize, R: DeserializeOwned>(&self, body: &B) -> Result<R, RemoteError> {
        let mut req = self.client.post(&self.config.url).json(body);
        if let Some(t) = &self.config.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                RemoteError::Timeout(e.to_string())
            } else {
                RemoteError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| RemoteError::Transport(e.to_string()))?;
        if status != StatusCode::OK {
            return Err(RemoteError::Status { status: status.as_u16(), body: text });
        }
        if let Ok(ErrorBody { error }) = serde_json::from_str::<ErrorBody>(&text) {
            return Err(RemoteError::Remote(error));
        }
        serde_json::from_str(&text).map_err(|e| RemoteError::MalformedResponse(e.to_string()))
    }

    /// Returns the decoded body and the number of retries spent.
    fn post<B: Serialize, R: DeserializeOwned>(&self, body: &B) -> Result<(R, u32), RemoteError> {
        let mut attempt = 0;
        loop {
            match self.once(body) {
                Ok(r) => return Ok((r, attempt)),
                Err(e) if e.retryable() && attempt < self.config.retries => {
                    sleep(self.config.backoff * 2u32.saturating_pow(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ErrorBody {
    error: String,
}

/// Per-video facts sent with each tool request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireVideo {
    pub id: String,
    pub duration: u32,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolRequest {
    pub tool: ToolId,
    pub video_ids: Vec<String>,
    pub window: Option<TimeWindow>,
    pub params: ParamMap,
    pub query: Option<String>,
    pub videos: Vec<WireVideo>,
}

impl ToolRequest {
    pub fn from_call(call: &ResolvedCall, registry: &VideoRegistry) -> Self {
        let c = call.call();
        let videos = c
            .video_ids
            .iter()
            .filter_map(|id| {
                registry.get(id).map(|e| WireVideo { id: id.clone(), duration: e.duration, source: e.source.clone() })
            })
            .collect();
        ToolRequest {
            tool: c.tool,
            video_ids: c.video_ids.clone(),
            window: c.window,
            params: c.params.clone(),
            query: c.query.clone(),
            videos,
        }
    }
}

/// Tool backend forwarding every call to one HTTP endpoint.
#[derive(Debug, Clone)]
pub struct RemoteToolBackend {
    endpoint: Endpoint,
    tools: BTreeSet<ToolId>,
}

impl RemoteToolBackend {
    pub fn new(config: EndpointConfig, tools: BTreeSet<ToolId>) -> Result<Self, RemoteError> {
        Ok(RemoteToolBackend { endpoint: Endpoint::new(config)?, tools })
    }
}

impl ToolBackend for RemoteToolBackend {
    fn capabilities(&self) -> BTreeSet<ToolId> {
        self.tools.clone()
    }

    fn invoke(&self, call: &ResolvedCall, registry: &VideoRegistry) -> Result<BackendResponse, BackendError> {
        let request = ToolRequest::from_call(call, registry);
        let (payload, retries): (Payload, u32) =
            self.endpoint.post(&request).map_err(|e| BackendError(e.to_string()))?;
        Ok(BackendResponse { payload, retries })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerWireRequest {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannerWireReply {
    pub reply: String,
}

/// Planner backend sending the message history to a chat endpoint.
#[derive(Debug, Clone)]
pub struct RemotePlannerBackend {
    endpoint: Endpoint,
    /// Retries spent per prompt round, for the trace.
    pub retries: BTreeMap<u32, u32>,
}

impl RemotePlannerBackend {
    pub fn new(config: EndpointConfig) -> Result<Self, RemoteError> {
        Ok(RemotePlannerBackend { endpoint: Endpoint::new(config)?, retries: BTreeMap::new() })
    }
}

impl PlannerBackend for RemotePlannerBackend {
    fn reply(&mut self, request: &PlannerRequest<'_>) -> Result<String, PlannerError> {
        let body = PlannerWireRequest {
            messages: request.messages.to_vec(),
            temperature: request.temperature,
            seed: request.seed,
        };
        let (r, retries): (PlannerWireReply, u32) =
            self.endpoint.post(&body).map_err(|e| PlannerError::Unavailable(e.to_string()))?;
        self.retries.insert(request.round, retries);
        Ok(r.reply)
    }
}
