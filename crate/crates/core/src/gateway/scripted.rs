//! Deterministic scripted backend.
//!
//! A script is a JSON document mapping (template, selector) to a response:
//! either literal text, a failure directive, or a small synthesized behavior
//! for closed-loop runs (`write_from_plan` writes a section that honors the
//! unit plan carried in the request, `resize_text` obeys the length prompt,
//! `cover_deficiencies` fixes a unit plan). Rules are matched first to last;
//! `times` limits how often a rule fires, which is how "fail twice then
//! succeed" sequences are scripted. Same script plus same request sequence
//! always yields byte-identical responses.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Backend, BackendFailure, BackendReply, LlmRequest};
use crate::eval::count_words;

pub const SCRIPT_SCHEMA: &str = "script/1";

/// Filler vocabulary for synthesized text. Kept disjoint from the marker
/// vocabulary in `taskgen` so synthesized filler can never satisfy a
/// requirement by accident.
pub const FILLER_WORDS: &[&str] = &[
    "the", "day", "moved", "along", "with", "steady", "notes", "about", "ordinary", "progress",
    "while", "plans", "settled", "into", "routine", "detail", "and", "every", "moment", "found",
    "its", "quiet", "place", "in", "record",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailKind {
    Transient,
    Permanent,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    /// Compose a section of exactly `words` words from the request's
    /// `unit_plan` slot (each directive kept as a sentence, filler after).
    WriteFromPlan,
    /// Obey a length prompt: expand or compress `current_text` to exactly
    /// `target_length` words.
    ResizeText,
    /// Return the unit plan's directives plus one `include: <item>` per
    /// line of the `deficiencies` slot.
    CoverDeficiencies,
}

/// What a matched rule does. Exactly one of `respond`, `fail`, `mode`
/// should be set.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptAction {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub respond: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail: Option<FailKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ActionMode>,
    /// Word budget for `write_from_plan`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub words: Option<usize>,
    /// For `write_from_plan`: drop each directive with this percent chance
    /// (decided by a stable hash, not a live RNG).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phrase_loss_pct: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub salt: Option<u64>,
    /// Artificial service time, for concurrency probes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_ms: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptRule {
    /// Template name to match ("p_write", ...); absent matches any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    /// Unit index to match; absent matches any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<usize>,
    /// Substring of the prompt to match; absent matches any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    /// Fire at most this many times, then fall through to later rules.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<u32>,
    #[serde(flatten)]
    pub action: ScriptAction,
}

impl ScriptRule {
    fn matches(&self, req: &LlmRequest) -> bool {
        if let Some(t) = &self.template {
            if t != req.template.as_str() {
                return false;
            }
        }
        if let Some(u) = self.unit {
            if req.unit != Some(u) {
                return false;
            }
        }
        if let Some(sub) = &self.contains {
            if !req.prompt.contains(sub) {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Script {
    #[serde(default = "default_script_schema")]
    pub schema: String,
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    /// Fallback when no rule matches.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<ScriptAction>,
}

fn default_script_schema() -> String {
    SCRIPT_SCHEMA.to_string()
}

impl Default for Script {
    fn default() -> Self {
        Self {
            schema: SCRIPT_SCHEMA.to_string(),
            rules: Vec::new(),
            default: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ScriptFormatError {
    #[error("script file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported script schema {found:?} (expected {SCRIPT_SCHEMA:?})")]
    Schema { found: String },
}

impl Script {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("script serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ScriptFormatError> {
        let script: Script = serde_json::from_str(text)?;
        if script.schema != SCRIPT_SCHEMA {
            return Err(ScriptFormatError::Schema {
                found: script.schema,
            });
        }
        Ok(script)
    }
}

/// FNV-1a over (salt, unit, text); stable across runs and platforms.
fn stable_hash(salt: u64, unit: usize, text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(&salt.to_le_bytes());
    eat(&unit.to_le_bytes());
    eat(text.as_bytes());
    h
}

fn filler_to(tokens: &mut Vec<String>, target: usize, seed: usize) {
    let mut i = 0;
    while tokens.len() < target {
        tokens.push(FILLER_WORDS[(seed + i) % FILLER_WORDS.len()].to_string());
        i += 1;
    }
}

fn write_from_plan(req: &LlmRequest, action: &ScriptAction) -> String {
    let plan = req.slots.get("unit_plan").map(String::as_str).unwrap_or("");
    let unit = req.unit.unwrap_or(0);
    let loss = action.phrase_loss_pct.unwrap_or(0) as u64;
    let salt = action.salt.unwrap_or(0);
    let mut tokens: Vec<String> = Vec::new();
    for directive in plan.split(';').map(str::trim).filter(|d| !d.is_empty()) {
        if loss > 0 && stable_hash(salt, unit, directive) % 100 < loss {
            continue;
        }
        tokens.extend(directive.split_whitespace().map(str::to_string));
        if let Some(last) = tokens.last_mut() {
            last.push('.');
        }
    }
    let target = action.words.unwrap_or(tokens.len().max(1));
    filler_to(&mut tokens, target, unit);
    tokens.join(" ")
}

fn resize_text(req: &LlmRequest) -> String {
    let current = req
        .slots
        .get("current_text")
        .map(String::as_str)
        .unwrap_or("");
    let target: usize = req
        .slots
        .get("target_length")
        .and_then(|t| t.parse().ok())
        .unwrap_or(1)
        .max(1);
    let direction = req
        .slots
        .get("direction")
        .map(String::as_str)
        .unwrap_or("expand");
    let mut tokens: Vec<String> = current.split_whitespace().map(str::to_string).collect();
    if direction == "compress" {
        tokens.truncate(target);
    } else {
        filler_to(&mut tokens, target, req.unit.unwrap_or(0));
    }
    tokens.join(" ")
}

fn cover_deficiencies(req: &LlmRequest) -> String {
    let plan = req.slots.get("unit_plan").map(String::as_str).unwrap_or("");
    let deficiencies = req
        .slots
        .get("deficiencies")
        .map(String::as_str)
        .unwrap_or("");
    let mut directives: Vec<String> = plan
        .split(';')
        .map(str::trim)
        .filter(|d| !d.is_empty())
        .map(str::to_string)
        .collect();
    for line in deficiencies.lines() {
        let phrase = line.trim().trim_start_matches('-').trim();
        if !phrase.is_empty() {
            directives.push(format!("include: {phrase}"));
        }
    }
    directives.join("; ")
}

/// Replays a [`Script`]. Also a concurrency probe: it tracks the peak
/// number of in-flight `execute` calls it has seen.
pub struct ScriptedBackend {
    script: Script,
    uses: Mutex<Vec<u32>>,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(script: Script) -> Self {
        let rule_count = script.rules.len();
        Self {
            script,
            uses: Mutex::new(vec![0; rule_count]),
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
        }
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    fn select_action(&self, req: &LlmRequest) -> Option<ScriptAction> {
        let mut uses = self.uses.lock().unwrap();
        for (i, rule) in self.script.rules.iter().enumerate() {
            if let Some(limit) = rule.times {
                if uses[i] >= limit {
                    continue;
                }
            }
            if rule.matches(req) {
                uses[i] += 1;
                return Some(rule.action.clone());
            }
        }
        self.script.default.clone()
    }
}

impl Backend for ScriptedBackend {
    fn execute(&self, req: &LlmRequest) -> Result<BackendReply, BackendFailure> {
        let live = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(live, Ordering::SeqCst);
        let result = (|| {
            let action = self.select_action(req).ok_or_else(|| {
                BackendFailure::Permanent(format!(
                    "no script rule matches template={} unit={:?}",
                    req.template.as_str(),
                    req.unit
                ))
            })?;
            if let Some(ms) = action.delay_ms {
                std::thread::sleep(std::time::Duration::from_millis(ms));
            }
            if let Some(kind) = action.fail {
                return Err(match kind {
                    FailKind::Transient => {
                        BackendFailure::Transient("scripted transient failure".into())
                    }
                    FailKind::Permanent => {
                        BackendFailure::Permanent("scripted permanent failure".into())
                    }
                    FailKind::Timeout => BackendFailure::Timeout("scripted timeout".into()),
                });
            }
            let text = if let Some(text) = &action.respond {
                text.clone()
            } else {
                match action.mode {
                    Some(ActionMode::WriteFromPlan) => write_from_plan(req, &action),
                    Some(ActionMode::ResizeText) => resize_text(req),
                    Some(ActionMode::CoverDeficiencies) => cover_deficiencies(req),
                    None => {
                        return Err(BackendFailure::Permanent(
                            "script rule has no respond, fail, or mode".into(),
                        ))
                    }
                }
            };
            // Whitespace-token counts keep accounting invariants testable
            // offline.
            Ok(BackendReply {
                prompt_tokens: Some(count_words(&req.prompt)),
                completion_tokens: Some(count_words(&text)),
                text,
            })
        })();
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }

    fn name(&self) -> &'static str {
        "scripted"
    }
}
