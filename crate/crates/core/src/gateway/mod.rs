//! Single boundary to language models.
//!
//! Every model call in the pipeline goes through [`Gateway::complete`]:
//! prompt assembly from templates, transient-failure retries with
//! exponential backoff, a global concurrency cap, an optional
//! requests-per-minute limiter, and per-call accounting into the run trace.
//! Backends are pluggable; the HTTP backend speaks the OpenAI-compatible
//! chat-completions protocol, the scripted backend replays a JSON script
//! for deterministic offline runs.

pub mod http;
pub mod limiter;
pub mod scripted;
pub mod templates;
pub mod trace;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::count_words;
use limiter::{Clock, RateLimiter, Semaphore, SystemClock};
use scripted::{Script, ScriptedBackend};
use templates::{fill_template, PromptSet, TemplateError, TemplateName};
use trace::{TraceEvent, TraceLog};

pub use templates::slots;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Scripted,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub backend: BackendKind,
    /// Chat-completions URL or its base (http backend).
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Name of the environment variable holding the API key; secrets never
    /// appear in config files or flags.
    pub api_key_env: Option<String>,
    /// Script file path (scripted backend).
    pub script: Option<PathBuf>,
    pub max_concurrency: usize,
    pub max_retries: u32,
    pub retry_backoff_ms: u64,
    pub retry_backoff_multiplier: f64,
    pub requests_per_minute: Option<usize>,
    pub request_timeout_ms: u64,
    pub max_output_tokens: Option<usize>,
    pub temperature: Option<f32>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Scripted,
            endpoint: None,
            model: None,
            api_key_env: None,
            script: None,
            max_concurrency: 8,
            max_retries: 2,
            retry_backoff_ms: 250,
            retry_backoff_multiplier: 2.0,
            requests_per_minute: None,
            request_timeout_ms: 60_000,
            max_output_tokens: None,
            temperature: None,
        }
    }
}

impl GatewayConfig {
    fn validate(&self) -> Result<(), GatewayError> {
        if self.max_concurrency < 1 {
            return Err(GatewayError::Config("max_concurrency must be >= 1".into()));
        }
        if self.request_timeout_ms == 0 {
            return Err(GatewayError::Config("request_timeout_ms must be > 0".into()));
        }
        Ok(())
    }
}

/// One prepared model call.
#[derive(Debug, Clone)]
pub struct LlmRequest {
    /// Unique within a run; assigned by the gateway.
    pub request_id: u64,
    pub template: TemplateName,
    pub prompt: String,
    /// Unit this call is about, when there is one. Used by script selectors
    /// and carried into the trace.
    pub unit: Option<usize>,
    /// The slot values the prompt was filled from; scripted behaviors read
    /// these instead of re-parsing the prompt.
    pub slots: BTreeMap<String, String>,
    pub max_output_tokens: Option<usize>,
    pub temperature: Option<f32>,
}

impl LlmRequest {
    pub fn with_unit(mut self, unit: usize) -> Self {
        self.unit = Some(unit);
        self
    }
}

#[derive(Debug, Clone)]
pub struct LlmResponse {
    pub request_id: u64,
    pub text: String,
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
    pub latency_ms: u64,
    pub backend: String,
    /// Transient failures absorbed before this response.
    pub retries: u32,
}

/// What a backend returns for one attempt. Token counts are optional; the
/// gateway falls back to whitespace-token counts so accounting always adds
/// up.
#[derive(Debug, Clone)]
pub struct BackendReply {
    pub text: String,
    pub prompt_tokens: Option<usize>,
    pub completion_tokens: Option<usize>,
}

#[derive(Debug, Error)]
pub enum BackendFailure {
    /// Worth retrying: timeouts at the transport, 429/5xx-class statuses.
    #[error("transient failure: {0}")]
    Transient(String),
    /// Not worth retrying: auth errors, bad requests, protocol breakage.
    #[error("permanent failure: {0}")]
    Permanent(String),
    #[error("timed out: {0}")]
    Timeout(String),
}

pub trait Backend: Send + Sync {
    fn execute(&self, req: &LlmRequest) -> Result<BackendReply, BackendFailure>;
    fn name(&self) -> &'static str;
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("request {request_id}: permanent backend error: {detail}")]
    PermanentBackend { request_id: u64, detail: String },
    #[error("request {request_id}: retries exhausted after {attempts} attempts: {detail}")]
    RetriesExhausted {
        request_id: u64,
        attempts: u32,
        detail: String,
    },
    #[error("request {request_id}: timed out: {detail}")]
    Timeout { request_id: u64, detail: String },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("gateway configuration: {0}")]
    Config(String),
}

impl GatewayError {
    pub fn request_id(&self) -> Option<u64> {
        match self {
            GatewayError::PermanentBackend { request_id, .. }
            | GatewayError::RetriesExhausted { request_id, .. }
            | GatewayError::Timeout { request_id, .. } => Some(*request_id),
            _ => None,
        }
    }
}

/// The shared model boundary. Safe to call from many worker threads; rate
/// and concurrency limits are enforced here so callers never coordinate.
pub struct Gateway {
    backend: Arc<dyn Backend>,
    prompts: PromptSet,
    clock: Arc<dyn Clock>,
    semaphore: Semaphore,
    limiter: Option<RateLimiter>,
    trace: Arc<TraceLog>,
    max_retries: u32,
    retry_backoff_ms: u64,
    retry_backoff_multiplier: f64,
    default_max_output_tokens: Option<usize>,
    default_temperature: Option<f32>,
    next_id: AtomicU64,
}

impl Gateway {
    pub fn new(
        config: &GatewayConfig,
        backend: Arc<dyn Backend>,
        prompts: PromptSet,
        trace: Arc<TraceLog>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, GatewayError> {
        config.validate()?;
        prompts.validate()?;
        Ok(Self {
            backend,
            prompts,
            clock,
            semaphore: Semaphore::new(config.max_concurrency),
            limiter: config.requests_per_minute.map(RateLimiter::per_minute),
            trace,
            max_retries: config.max_retries,
            retry_backoff_ms: config.retry_backoff_ms,
            retry_backoff_multiplier: config.retry_backoff_multiplier,
            default_max_output_tokens: config.max_output_tokens,
            default_temperature: config.temperature,
            next_id: AtomicU64::new(1),
        })
    }

    /// Build the backend named by the config (reading script files as
    /// needed) and wrap it. The standard constructor for CLI use.
    pub fn from_config(
        config: &GatewayConfig,
        prompts: PromptSet,
        trace: Arc<TraceLog>,
    ) -> Result<Self, GatewayError> {
        let backend: Arc<dyn Backend> = match config.backend {
            BackendKind::Scripted => {
                let path = config.script.as_ref().ok_or_else(|| {
                    GatewayError::Config("scripted backend needs a script file".into())
                })?;
                let text = std::fs::read_to_string(path).map_err(|e| {
                    GatewayError::Config(format!("script file {}: {e}", path.display()))
                })?;
                let script = Script::from_json(&text)
                    .map_err(|e| GatewayError::Config(format!("script file: {e}")))?;
                Arc::new(ScriptedBackend::new(script))
            }
            BackendKind::Http => Arc::new(http::HttpBackend::from_config(config)?),
        };
        Self::new(config, backend, prompts, trace, Arc::new(SystemClock::new()))
    }

    pub fn trace(&self) -> &Arc<TraceLog> {
        &self.trace
    }

    pub fn prompts(&self) -> &PromptSet {
        &self.prompts
    }

    /// Fill a template into a ready-to-send request.
    pub fn request(
        &self,
        template: TemplateName,
        slots: BTreeMap<String, String>,
    ) -> Result<LlmRequest, GatewayError> {
        let prompt = fill_template(&self.prompts, template, &slots)?;
        Ok(LlmRequest {
            request_id: self.next_id.fetch_add(1, Ordering::SeqCst),
            template,
            prompt,
            unit: None,
            slots,
            max_output_tokens: self.default_max_output_tokens,
            temperature: self.default_temperature,
        })
    }

    /// Execute one call. Transient failures are retried with exponential
    /// backoff up to the configured limit; every call appends exactly one
    /// trace record whether it succeeds or not.
    pub fn complete(&self, req: LlmRequest) -> Result<LlmResponse, GatewayError> {
        if req.prompt.trim().is_empty() {
            return Err(GatewayError::Config("refusing to send an empty prompt".into()));
        }
        let _permit = self.semaphore.acquire();
        let started = self.clock.now_ms();
        let mut retries: u32 = 0;
        let mut backoff = self.retry_backoff_ms;
        let outcome = loop {
            if let Some(limiter) = &self.limiter {
                limiter.acquire(&*self.clock);
            }
            match self.backend.execute(&req) {
                Ok(reply) => break Ok(reply),
                Err(BackendFailure::Permanent(detail)) => {
                    break Err((
                        "permanent_error",
                        GatewayError::PermanentBackend {
                            request_id: req.request_id,
                            detail,
                        },
                    ))
                }
                Err(failure @ (BackendFailure::Transient(_) | BackendFailure::Timeout(_))) => {
                    if retries >= self.max_retries {
                        break Err(match failure {
                            BackendFailure::Timeout(detail) => (
                                "timeout",
                                GatewayError::Timeout {
                                    request_id: req.request_id,
                                    detail,
                                },
                            ),
                            BackendFailure::Transient(detail) => (
                                "retries_exhausted",
                                GatewayError::RetriesExhausted {
                                    request_id: req.request_id,
                                    attempts: retries + 1,
                                    detail,
                                },
                            ),
                            BackendFailure::Permanent(_) => unreachable!(),
                        });
                    }
                    retries += 1;
                    self.clock.sleep_ms(backoff);
                    backoff = (backoff as f64 * self.retry_backoff_multiplier) as u64;
                }
            }
        };
        let latency_ms = self.clock.now_ms().saturating_sub(started);
        let (outcome_label, prompt_tokens, completion_tokens) = match &outcome {
            Ok(reply) => (
                "ok",
                reply.prompt_tokens.unwrap_or_else(|| count_words(&req.prompt)),
                reply
                    .completion_tokens
                    .unwrap_or_else(|| count_words(&reply.text)),
            ),
            Err((label, _)) => (*label, 0, 0),
        };
        self.trace.record(TraceEvent::LlmCall {
            request_id: req.request_id,
            template: req.template.as_str().to_string(),
            unit: req.unit,
            backend: self.backend.name().to_string(),
            outcome: outcome_label.to_string(),
            retries,
            prompt_tokens,
            completion_tokens,
            latency_ms,
            prompt: req.prompt.clone(),
        });
        match outcome {
            Ok(reply) => Ok(LlmResponse {
                request_id: req.request_id,
                text: reply.text,
                prompt_tokens,
                completion_tokens,
                latency_ms,
                backend: self.backend.name().to_string(),
                retries,
            }),
            Err((_, err)) => Err(err),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::limiter::VirtualClock;
    use super::scripted::{FailKind, Script, ScriptAction, ScriptRule};
    use super::*;

    fn scripted_gateway(script: Script, config: GatewayConfig) -> (Gateway, Arc<ScriptedBackend>) {
        let backend = Arc::new(ScriptedBackend::new(script));
        let gw = Gateway::new(
            &config,
            backend.clone(),
            PromptSet::default(),
            Arc::new(TraceLog::in_memory()),
            Arc::new(VirtualClock::new()),
        )
        .unwrap();
        (gw, backend)
    }

    fn write_slots() -> BTreeMap<String, String> {
        slots(&[
            ("scenario", "a scenario"),
            ("instructions", "the rules"),
            ("unit_label", "Week 3"),
            ("unit_plan", "rest; pack"),
            ("target_length", "12"),
        ])
    }

    fn respond_script(text: &str) -> Script {
        Script {
            rules: vec![ScriptRule {
                action: ScriptAction {
                    respond: Some(text.into()),
                    ..Default::default()
                },
                ..Default::default()
            }],
            ..Default::default()
        }
    }

    #[test]
    fn scripted_echo_records_accounting() {
        let (gw, _) = scripted_gateway(respond_script("five words of scripted text"), GatewayConfig::default());
        let req = gw.request(TemplateName::Write, write_slots()).unwrap().with_unit(3);
        let resp = gw.complete(req).unwrap();
        assert_eq!(resp.text, "five words of scripted text");
        assert_eq!(resp.completion_tokens, 5);
        assert_eq!(resp.backend, "scripted");
        let events = gw.trace().events();
        assert_eq!(events.len(), 1);
        match &events[0] {
            TraceEvent::LlmCall {
                outcome,
                unit,
                completion_tokens,
                prompt,
                ..
            } => {
                assert_eq!(outcome, "ok");
                assert_eq!(*unit, Some(3));
                assert_eq!(*completion_tokens, 5);
                assert!(prompt.contains("Week 3"));
            }
            other => panic!("unexpected event {other:?}"),
        }
    }

    #[test]
    fn fail_twice_then_succeed_within_retry_budget() {
        let script = Script {
            rules: vec![
                ScriptRule {
                    times: Some(2),
                    action: ScriptAction {
                        fail: Some(FailKind::Transient),
                        ..Default::default()
                    },
                    ..Default::default()
                },
                ScriptRule {
                    action: ScriptAction {
                        respond: Some("made it".into()),
                        ..Default::default()
                    },
                    ..Default::default()
                },
            ],
            ..Default::default()
        };
        let config = GatewayConfig {
            max_retries: 3,
            ..Default::default()
        };
        let (gw, _) = scripted_gateway(script, config);
        let req = gw.request(TemplateName::Write, write_slots()).unwrap();
        let resp = gw.complete(req).unwrap();
        assert_eq!(resp.text, "made it");
        assert_eq!(resp.retries, 2);
        assert_eq!(gw.trace().call_count(), 1, "retries stay inside one record");
        match &gw.trace().events()[0] {
            TraceEvent::LlmCall { retries, outcome, .. } => {
                assert_eq!(*retries, 2);
                assert_eq!(outcome, "ok");
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn retries_exhausted_and_permanent_both_leave_one_record() {
        let always_fail = Script {
            rules: vec![ScriptRule {
                action: ScriptAction {
                    fail: Some(FailKind::Transient),
                    ..Default::default()
                },
                ..Default::default()
            }],
            ..Default::default()
        };
        let (gw, _) = scripted_gateway(
            always_fail,
            GatewayConfig {
                max_retries: 1,
                ..Default::default()
            },
        );
        let req = gw.request(TemplateName::Write, write_slots()).unwrap();
        let id = req.request_id;
        let err = gw.complete(req).unwrap_err();
        assert!(matches!(err, GatewayError::RetriesExhausted { .. }));
        assert_eq!(err.request_id(), Some(id));
        assert_eq!(gw.trace().call_count(), 1);

        let permanent = Script {
            rules: vec![ScriptRule {
                action: ScriptAction {
                    fail: Some(FailKind::Permanent),
                    ..Default::default()
                },
                ..Default::default()
            }],
            ..Default::default()
        };
        let (gw2, _) = scripted_gateway(permanent, GatewayConfig::default());
        let req2 = gw2.request(TemplateName::Write, write_slots()).unwrap();
        assert!(matches!(
            gw2.complete(req2),
            Err(GatewayError::PermanentBackend { .. })
        ));
        assert_eq!(gw2.trace().call_count(), 1);
    }

    #[test]
    fn timeout_failures_surface_as_timeout_errors() {
        let script = Script {
            rules: vec![ScriptRule {
                action: ScriptAction {
                    fail: Some(FailKind::Timeout),
                    ..Default::default()
                },
                ..Default::default()
            }],
            ..Default::default()
        };
        let (gw, _) = scripted_gateway(
            script,
            GatewayConfig {
                max_retries: 0,
                ..Default::default()
            },
        );
        let req = gw.request(TemplateName::Write, write_slots()).unwrap();
        assert!(matches!(gw.complete(req), Err(GatewayError::Timeout { .. })));
    }

    #[test]
    fn concurrency_cap_bounds_in_flight_requests() {
        let script = Script {
            rules: vec![ScriptRule {
                action: ScriptAction {
                    respond: Some("ok".into()),
                    delay_ms: Some(25),
                    ..Default::default()
                },
                ..Default::default()
            }],
            ..Default::default()
        };
        let backend = Arc::new(ScriptedBackend::new(script));
        let gw = Arc::new(
            Gateway::new(
                &GatewayConfig {
                    max_concurrency: 2,
                    ..Default::default()
                },
                backend.clone(),
                PromptSet::default(),
                Arc::new(TraceLog::in_memory()),
                Arc::new(SystemClock::new()),
            )
            .unwrap(),
        );
        let mut handles = Vec::new();
        for _ in 0..8 {
            let gw = gw.clone();
            handles.push(std::thread::spawn(move || {
                let req = gw.request(TemplateName::Write, write_slots()).unwrap();
                gw.complete(req).unwrap();
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        assert!(backend.peak_in_flight() <= 2, "peak {}", backend.peak_in_flight());
        assert_eq!(gw.trace().call_count(), 8);
    }

    #[test]
    fn token_totals_sum_over_all_calls() {
        let (gw, _) = scripted_gateway(respond_script("two words"), GatewayConfig::default());
        for _ in 0..4 {
            let req = gw.request(TemplateName::Write, write_slots()).unwrap();
            gw.complete(req).unwrap();
        }
        let (_, completion) = gw.trace().token_totals();
        assert_eq!(completion, 8);
    }

    #[test]
    fn request_ids_are_unique_per_run() {
        let (gw, _) = scripted_gateway(respond_script("x"), GatewayConfig::default());
        let a = gw.request(TemplateName::Write, write_slots()).unwrap();
        let b = gw.request(TemplateName::Write, write_slots()).unwrap();
        assert_ne!(a.request_id, b.request_id);
    }

    #[test]
    fn rate_limited_calls_respect_the_window() {
        let clock = Arc::new(VirtualClock::new());
        let backend = Arc::new(ScriptedBackend::new(respond_script("ok")));
        let gw = Gateway::new(
            &GatewayConfig {
                requests_per_minute: Some(2),
                ..Default::default()
            },
            backend,
            PromptSet::default(),
            Arc::new(TraceLog::in_memory()),
            clock.clone(),
        )
        .unwrap();
        for _ in 0..5 {
            let req = gw.request(TemplateName::Write, write_slots()).unwrap();
            gw.complete(req).unwrap();
        }
        // 5 calls at 2/min forces at least two window waits on the virtual
        // clock.
        assert!(clock.now_ms() >= 120_000, "clock only at {}", clock.now_ms());
    }

    #[test]
    fn empty_prompt_is_rejected_before_the_backend() {
        let (gw, _) = scripted_gateway(respond_script("x"), GatewayConfig::default());
        let mut req = gw.request(TemplateName::Write, write_slots()).unwrap();
        req.prompt = "   ".into();
        assert!(matches!(gw.complete(req), Err(GatewayError::Config(_))));
        assert_eq!(gw.trace().call_count(), 0);
    }
}
