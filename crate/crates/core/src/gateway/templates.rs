//! Prompt templates and slot filling.
//!
//! Five templates drive the pipeline: `p_plan`, `p_revise`, `p_adjust`,
//! `p_write`, `p_length`. Placeholders are `{name}` tokens from a fixed,
//! declared set; a template referencing anything else fails validation at
//! load time, and filling fails if a referenced slot is not supplied, so a
//! filled prompt can never carry a leftover `{...}` marker. Defaults ship in
//! the binary and any of them can be overridden by a `<name>.txt` file in a
//! prompt directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

/// Every placeholder a template may reference.
pub const DECLARED_SLOTS: &[&str] = &[
    "scenario",
    "instructions",
    "unit_label",
    "unit_plan",
    "deficiencies",
    "current_text",
    "target_length",
    "direction",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemplateName {
    Plan,
    Revise,
    Adjust,
    Write,
    Length,
}

impl TemplateName {
    pub const ALL: [TemplateName; 5] = [
        TemplateName::Plan,
        TemplateName::Revise,
        TemplateName::Adjust,
        TemplateName::Write,
        TemplateName::Length,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TemplateName::Plan => "p_plan",
            TemplateName::Revise => "p_revise",
            TemplateName::Adjust => "p_adjust",
            TemplateName::Write => "p_write",
            TemplateName::Length => "p_length",
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateName {
    type Err = TemplateError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "p_plan" => Ok(TemplateName::Plan),
            "p_revise" => Ok(TemplateName::Revise),
            "p_adjust" => Ok(TemplateName::Adjust),
            "p_write" => Ok(TemplateName::Write),
            "p_length" => Ok(TemplateName::Length),
            other => Err(TemplateError::UnknownTemplate(other.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("template {template} references undeclared placeholder {{{slot}}}")]
    UndeclaredPlaceholder { template: String, slot: String },
    #[error("missing slot {{{slot}}} for template {template}")]
    MissingSlot { template: String, slot: String },
    #[error("prompt file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

const DEFAULT_P_PLAN: &str = "\
You are the planning stage of a structured long-form writing pipeline.

Scenario:
{scenario}

{instructions}

Write the complete plan now. Rules:
- First line is exactly the header line given above.
- Then exactly one line per unit, in index order: #<index> | <unit label> | <directive>; <directive>; ...
- Every required content item must appear verbatim in the directives of its target unit.
- Output the plan only: no prose before or after it, no code fences.
";

const DEFAULT_P_REVISE: &str = "\
You are revising the plan for a structured long-form writing task.

Scenario:
{scenario}

{instructions}

Current plan:
{unit_plan}

Problems the plan monitor found:
{deficiencies}

Write the corrected complete plan. Same format: the header line first, then
one #<index> | <label> | <directives> line per unit, every unit present,
every required content item verbatim in its target unit. Output the plan
only.
";

const DEFAULT_P_ADJUST: &str = "\
You are adjusting the plan for one unit of a structured writing task.

Scenario:
{scenario}

{instructions}

Unit: {unit_label}
Current unit plan: {unit_plan}

The unit plan is missing this required content:
{deficiencies}

Respond with the corrected directive list for this unit only, on a single
line, directives separated by \"; \". Keep the existing directives and add
every missing item verbatim.
";

const DEFAULT_P_WRITE: &str = "\
You are writing one unit of a structured long-form document.

Scenario:
{scenario}

{instructions}

Write the section for {unit_label}. Follow this unit plan and cover every
directive: {unit_plan}

The section must be at least {target_length} words. Write the section text
only: no headings, no commentary.
";

const DEFAULT_P_LENGTH: &str = "\
The section below for {unit_label} misses its length target of
{target_length} words. Rewrite it to {direction} it to about {target_length}
words, keeping every concrete detail and required content item. The unit
plan, for reference: {unit_plan}

Current text:
{current_text}

Respond with the rewritten section text only.
";

/// The five templates, as text with `{slot}` markers.
#[derive(Debug, Clone)]
pub struct PromptSet {
    plan: String,
    revise: String,
    adjust: String,
    write: String,
    length: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            plan: DEFAULT_P_PLAN.to_string(),
            revise: DEFAULT_P_REVISE.to_string(),
            adjust: DEFAULT_P_ADJUST.to_string(),
            write: DEFAULT_P_WRITE.to_string(),
            length: DEFAULT_P_LENGTH.to_string(),
        }
    }
}

static SLOT_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([a-z_]+)\}").unwrap());

impl PromptSet {
    pub fn get(&self, name: TemplateName) -> &str {
        match name {
            TemplateName::Plan => &self.plan,
            TemplateName::Revise => &self.revise,
            TemplateName::Adjust => &self.adjust,
            TemplateName::Write => &self.write,
            TemplateName::Length => &self.length,
        }
    }

    fn get_mut(&mut self, name: TemplateName) -> &mut String {
        match name {
            TemplateName::Plan => &mut self.plan,
            TemplateName::Revise => &mut self.revise,
            TemplateName::Adjust => &mut self.adjust,
            TemplateName::Write => &mut self.write,
            TemplateName::Length => &mut self.length,
        }
    }

    /// Defaults overridden by `<template>.txt` files found in `dir`.
    pub fn load_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = PromptSet::default();
        for name in TemplateName::ALL {
            let path = dir.join(format!("{}.txt", name.as_str()));
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|source| TemplateError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                *set.get_mut(name) = text;
            }
        }
        set.validate()?;
        Ok(set)
    }

    /// Every `{slot}` each template references must be declared.
    pub fn validate(&self) -> Result<(), TemplateError> {
        for name in TemplateName::ALL {
            for cap in SLOT_RE.captures_iter(self.get(name)) {
                let slot = &cap[1];
                if !DECLARED_SLOTS.contains(&slot) {
                    return Err(TemplateError::UndeclaredPlaceholder {
                        template: name.as_str().to_string(),
                        slot: slot.to_string(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Substitute slots into a template. Every placeholder the template
/// references must be present in `slots`; the result carries no residual
/// `{slot}` markers.
pub fn fill_template(
    set: &PromptSet,
    name: TemplateName,
    slots: &BTreeMap<String, String>,
) -> Result<String, TemplateError> {
    let template = set.get(name);
    let mut out = String::with_capacity(template.len());
    let mut last = 0;
    for cap in SLOT_RE.captures_iter(template) {
        let whole = cap.get(0).unwrap();
        let slot = &cap[1];
        out.push_str(&template[last..whole.start()]);
        match slots.get(slot) {
            Some(value) => out.push_str(value),
            None => {
                return Err(TemplateError::MissingSlot {
                    template: name.as_str().to_string(),
                    slot: slot.to_string(),
                })
            }
        }
        last = whole.end();
    }
    out.push_str(&template[last..]);
    Ok(out)
}

/// Convenience for building slot maps.
pub fn slots(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}
