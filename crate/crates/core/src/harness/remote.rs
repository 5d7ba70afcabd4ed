use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::agents::{Agent, AgentError, AgentRequest};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Serialize)]
struct Request<'a> {
    context: &'a str,
}

#[derive(Deserialize)]
struct Response {
    output: String,
}

/// Client for an inference service that answers `POST {"context": ...}`
/// with `{"output": ...}`, one turn per request.
#[derive(Debug, Clone)]
pub struct RemoteAgent {
    endpoint: String,
    agent: ureq::Agent,
}

impl RemoteAgent {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(true)
            .build()
            .new_agent();
        Self { endpoint: endpoint.into(), agent }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

fn map_error(e: ureq::Error) -> AgentError {
    match e {
        ureq::Error::Timeout(_) => AgentError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => AgentError::Timeout,
        ureq::Error::Json(j) => AgentError::InvalidResponse(j.to_string()),
        other => AgentError::Unavailable(other.to_string()),
    }
}

impl Agent for RemoteAgent {
    fn respond(&self, request: &AgentRequest<'_>) -> Result<String, AgentError> {
        let mut response = self
            .agent
            .post(&self.endpoint)
            .send_json(Request { context: request.context })
            .map_err(map_error)?;
        let body: Response = response.body_mut().read_json().map_err(map_error)?;
        Ok(body.output)
    }
}
