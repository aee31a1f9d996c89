//! Client side of the code-interpreter wire protocol.
//!
//! `POST /execute` with `{"code", "timeout_ms"}` answers
//! `{"stdout", "stderr", "status", "duration_ms"}`.

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub const DEFAULT_TIMEOUT_MS: u64 = 5_000;
pub const DEFAULT_GRACE_MS: u64 = 1_000;
pub const INTERPRETER_URL_ENV: &str = "INTERPRETER_URL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    Timeout,
    Rejected,
    RuntimeError,
}

impl ExecStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ExecStatus::Ok => "ok",
            ExecStatus::Timeout => "timeout",
            ExecStatus::Rejected => "rejected",
            ExecStatus::RuntimeError => "runtime_error",
        }
    }
}

impl fmt::Display for ExecStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub stdout: String,
    pub stderr: String,
    pub status: ExecStatus,
    pub duration_ms: u64,
}

impl ExecutionResult {
    pub fn ok(stdout: impl Into<String>) -> Self {
        Self { stdout: stdout.into(), stderr: String::new(), status: ExecStatus::Ok, duration_ms: 0 }
    }

    pub fn failed(status: ExecStatus, stderr: impl Into<String>) -> Self {
        Self { stdout: String::new(), stderr: stderr.into(), status, duration_ms: 0 }
    }

    /// Text injected into a trajectory: stdout on success, else an error line.
    pub fn response_text(&self) -> String {
        match self.status {
            ExecStatus::Ok => self.stdout.clone(),
            status if self.stderr.trim().is_empty() => format!("error: {status}"),
            _ => format!("error: {}", self.stderr.trim_end()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecuteRequest {
    pub code: String,
    pub timeout_ms: u64,
}

pub trait CodeExecutor: Send + Sync {
    fn execute(&self, code: &str, timeout_ms: u64) -> ExecutionResult;
}

impl<T: CodeExecutor + ?Sized> CodeExecutor for Arc<T> {
    fn execute(&self, code: &str, timeout_ms: u64) -> ExecutionResult {
        (**self).execute(code, timeout_ms)
    }
}

/// Remote interpreter reached over HTTP. The client deadline is the
/// requested timeout plus a grace period.
pub struct HttpInterpreter {
    base_url: String,
    grace_ms: u64,
}

impl HttpInterpreter {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self { base_url: base_url.into().trim_end_matches('/').to_string(), grace_ms: DEFAULT_GRACE_MS }
    }

    pub fn with_grace_ms(mut self, grace_ms: u64) -> Self {
        self.grace_ms = grace_ms;
        self
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(INTERPRETER_URL_ENV).ok().map(Self::new)
    }

    pub fn endpoint(&self) -> String {
        format!("{}/execute", self.base_url)
    }
}

impl CodeExecutor for HttpInterpreter {
    fn execute(&self, code: &str, timeout_ms: u64) -> ExecutionResult {
        let deadline = Duration::from_millis(timeout_ms + self.grace_ms);
        let agent: ureq::Agent =
            ureq::Agent::config_builder().timeout_global(Some(deadline)).http_status_as_error(false).build().into();
        let started = Instant::now();
        let request = ExecuteRequest { code: code.to_string(), timeout_ms };
        let elapsed = |started: Instant| started.elapsed().as_millis() as u64;
        let mut resp = match agent.post(&self.endpoint()).send_json(&request) {
            Ok(resp) => resp,
            Err(ureq::Error::Timeout(_)) => {
                return ExecutionResult {
                    stdout: String::new(),
                    stderr: format!("client deadline of {} ms exceeded", deadline.as_millis()),
                    status: ExecStatus::Timeout,
                    duration_ms: elapsed(started).max(timeout_ms),
                }
            }
            Err(e) => {
                return ExecutionResult {
                    duration_ms: elapsed(started),
                    ..ExecutionResult::failed(ExecStatus::RuntimeError, format!("interpreter unreachable: {e}"))
                }
            }
        };
        let status = resp.status();
        match resp.body_mut().read_json::<ExecutionResult>() {
            Ok(result) => result,
            Err(e) => ExecutionResult {
                duration_ms: elapsed(started),
                ..ExecutionResult::failed(
                    ExecStatus::RuntimeError,
                    format!("interpreter returned HTTP {status} without a valid result: {e}"),
                )
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_strings() {
        let all = [ExecStatus::Ok, ExecStatus::Timeout, ExecStatus::Rejected, ExecStatus::RuntimeError];
        let names: Vec<String> = all.iter().map(|s| serde_json::to_string(s).unwrap()).collect();
        assert_eq!(names, ["\"ok\"", "\"timeout\"", "\"rejected\"", "\"runtime_error\""]);
    }

    #[test]
    fn response_text_forms() {
        assert_eq!(ExecutionResult::ok("True\n").response_text(), "True\n");
        assert_eq!(
            ExecutionResult::failed(ExecStatus::RuntimeError, "NameError: x\n").response_text(),
            "error: NameError: x"
        );
        assert_eq!(ExecutionResult::failed(ExecStatus::Timeout, "").response_text(), "error: timeout");
    }

    #[test]
    fn refused_connection_maps_to_runtime_error() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        drop(listener);
        let client = HttpInterpreter::new(format!("http://127.0.0.1:{port}"));
        let result = client.execute("print(1)", 500);
        assert_eq!(result.status, ExecStatus::RuntimeError);
        assert!(result.stderr.contains("unreachable"));
    }
}
