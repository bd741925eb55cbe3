//! Generation engine: for each unit plan, adjust it against residual
//! requirements, generate the section, revise its length into the accepted
//! band, and assemble the final document — with bounded parallelism across
//! units and an index-ordered merge, so the assembled document never depends
//! on worker scheduling.

use std::collections::{BTreeMap, VecDeque};
use std::sync::mpsc;
use std::sync::Mutex;

use serde::Serialize;
use thiserror::Error;

use crate::constraint::{
    expand_check_set, residual_for_unit, CheckEntry, CheckSet, InvalidTask, TaskSpec,
};
use crate::eval::count_words;
use crate::gateway::templates::TemplateName;
use crate::gateway::{slots, Gateway};
use crate::plan::{parse_plan, Plan, UnitPlan, EMPTY_UNIT_DIRECTIVE};
use crate::planner::instruction_block;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitStatus {
    Ok,
    /// Finished out of the length band or with unmet requirements.
    Degraded,
    /// No text was produced at all.
    Failed,
}

/// One generated unit with its provenance.
#[derive(Debug, Clone, Serialize)]
pub struct UnitText {
    pub index: usize,
    pub label: String,
    pub text: String,
    pub word_count: usize,
    /// Candidate texts produced (initial + length revisions).
    pub attempts: usize,
    pub length_revisions: usize,
    /// Requirements the final text still does not satisfy (diagnostic).
    pub residual_after: Vec<CheckEntry>,
    pub status: UnitStatus,
}

#[derive(Debug, Clone, Serialize)]
pub struct Document {
    pub task_id: String,
    /// Always index-sorted, one entry per unit 1..=n; failed units appear
    /// with empty text rather than being dropped.
    pub units: Vec<UnitText>,
    pub total_words: usize,
    pub plan_snapshot: Plan,
}

#[derive(Debug, Clone)]
pub struct GenerationBudget {
    pub max_parallel_units: usize,
    pub max_adjust_rounds: u32,
    pub max_length_revisions: u32,
    /// Accepted word-count interval as fractions of the target length,
    /// inclusive on both ends.
    pub length_band: (f64, f64),
    /// Ablation switch: when off, unit plans go to the writer untouched.
    pub plan_adjust_enabled: bool,
}

impl Default for GenerationBudget {
    fn default() -> Self {
        Self {
            max_parallel_units: 4,
            max_adjust_rounds: 2,
            max_length_revisions: 3,
            length_band: (1.0, 1.5),
            plan_adjust_enabled: true,
        }
    }
}

impl GenerationBudget {
    fn validate(&self) -> Result<(), EngineError> {
        if self.max_parallel_units < 1 {
            return Err(EngineError::Config("max_parallel_units must be >= 1".into()));
        }
        let (lo, hi) = self.length_band;
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(EngineError::Config(format!(
                "length band [{lo}, {hi}] is not a valid interval"
            )));
        }
        Ok(())
    }

    fn in_band(&self, words: usize, target: usize) -> bool {
        let ratio = words as f64 / target as f64;
        ratio >= self.length_band.0 && ratio <= self.length_band.1
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("generation configuration: {0}")]
    Config(String),
    #[error(transparent)]
    InvalidSpec(#[from] InvalidTask),
}

fn directive_join(unit_plan: &UnitPlan) -> String {
    unit_plan.directives.join("; ")
}

// ---------------------------------------------------------------------------
// Per-unit steps
// ---------------------------------------------------------------------------

/// Check the unit plan against its residual requirements and repair it:
/// up to `max_adjust_rounds` model calls, then a deterministic fallback
/// that appends one `must include: <phrase>` directive per unmet
/// requirement. The returned plan always has an empty plan-level residual.
pub fn plan_adjust(
    gateway: &Gateway,
    unit_plan: &UnitPlan,
    spec: &TaskSpec,
    check: &CheckSet,
    budget: &GenerationBudget,
) -> UnitPlan {
    let residual =
        |up: &UnitPlan| residual_for_unit(check, up.index, &up.directive_text()).unwrap_or_default();
    let mut current = unit_plan.clone();
    let mut unmet = residual(&current);
    if unmet.is_empty() {
        return current;
    }
    let instructions = instruction_block(spec);
    for _ in 0..budget.max_adjust_rounds {
        let deficiencies = unmet
            .iter()
            .map(|e| format!("- {}", e.item.phrase))
            .collect::<Vec<_>>()
            .join("\n");
        let plan_text = directive_join(&current);
        let adjust_slots = slots(&[
            ("scenario", spec.scenario.as_str()),
            ("instructions", instructions.as_str()),
            ("unit_label", current.label.as_str()),
            ("unit_plan", plan_text.as_str()),
            ("deficiencies", deficiencies.as_str()),
        ]);
        let request = match gateway.request(TemplateName::Adjust, adjust_slots) {
            Ok(r) => r.with_unit(current.index),
            Err(_) => break,
        };
        match gateway.complete(request) {
            Ok(response) => {
                let directives = parse_adjust_response(&response.text, spec.unit_count, current.index);
                if !directives.is_empty() {
                    current.directives = directives;
                }
            }
            // The deterministic fallback below still guarantees coverage.
            Err(_) => break,
        }
        unmet = residual(&current);
        if unmet.is_empty() {
            return current;
        }
    }
    for entry in residual(&current) {
        current.directives.push(format!("must include: {}", entry.item.phrase));
    }
    current
}

/// Pull a directive list out of an adjust response: a unit-plan line if the
/// model echoed one, otherwise every non-empty line split on `;`.
fn parse_adjust_response(text: &str, unit_count: usize, index: usize) -> Vec<String> {
    let parsed = parse_plan(text, unit_count);
    if let Some(unit) = parsed.plan.unit(index) {
        return unit.directives.clone();
    }
    if let Some(unit) = parsed.plan.units.first() {
        if !unit.directives.is_empty() {
            return unit.directives.clone();
        }
    }
    text.lines()
        .flat_map(|l| l.split(';'))
        .map(str::trim)
        .map(|d| d.trim_start_matches('-').trim())
        .filter(|d| !d.is_empty() && !d.starts_with("```"))
        .map(str::to_string)
        .collect()
}

/// One `p_write` call from the adjusted unit plan. Gateway failures degrade
/// to a failed (empty) unit instead of aborting the run.
pub fn generate_unit(gateway: &Gateway, unit_plan: &UnitPlan, spec: &TaskSpec) -> UnitText {
    let label = spec.unit_label(unit_plan.index);
    let instructions = instruction_block(spec);
    let plan_text = directive_join(unit_plan);
    let target = spec.target_length.to_string();
    let write_slots = slots(&[
        ("scenario", spec.scenario.as_str()),
        ("instructions", instructions.as_str()),
        ("unit_label", label.as_str()),
        ("unit_plan", plan_text.as_str()),
        ("target_length", target.as_str()),
    ]);
    let failed = |label: String| UnitText {
        index: unit_plan.index,
        label,
        text: String::new(),
        word_count: 0,
        attempts: 0,
        length_revisions: 0,
        residual_after: Vec::new(),
        status: UnitStatus::Failed,
    };
    let request = match gateway.request(TemplateName::Write, write_slots) {
        Ok(r) => r.with_unit(unit_plan.index),
        Err(_) => return failed(label),
    };
    match gateway.complete(request) {
        Ok(response) => {
            let text = response.text.trim().to_string();
            if text.is_empty() {
                return failed(label);
            }
            UnitText {
                index: unit_plan.index,
                word_count: count_words(&text),
                text,
                label,
                attempts: 1,
                length_revisions: 0,
                residual_after: Vec::new(),
                status: UnitStatus::Ok,
            }
        }
        Err(_) => failed(label),
    }
}

/// Bring a unit's word count into the length band: up to
/// `max_length_revisions` expand/compress calls, keeping the candidate
/// closest to the target (ties to fewer words) if none lands in band.
pub fn length_revise(
    gateway: &Gateway,
    initial: UnitText,
    unit_plan: &UnitPlan,
    spec: &TaskSpec,
    budget: &GenerationBudget,
) -> UnitText {
    let target = spec.target_length;
    if budget.in_band(initial.word_count, target) {
        return UnitText {
            status: UnitStatus::Ok,
            ..initial
        };
    }
    let plan_text = directive_join(unit_plan);
    let target_str = target.to_string();
    let mut candidates: Vec<String> = vec![initial.text.clone()];
    let mut revisions = 0usize;
    for _ in 0..budget.max_length_revisions {
        let current = candidates.last().unwrap();
        let words = count_words(current);
        if budget.in_band(words, target) {
            break;
        }
        let direction = if (words as f64) < budget.length_band.0 * target as f64 {
            "expand"
        } else {
            "compress"
        };
        let length_slots = slots(&[
            ("unit_label", initial.label.as_str()),
            ("unit_plan", plan_text.as_str()),
            ("current_text", current.as_str()),
            ("target_length", target_str.as_str()),
            ("direction", direction),
        ]);
        let request = match gateway.request(TemplateName::Length, length_slots) {
            Ok(r) => r.with_unit(initial.index),
            Err(_) => break,
        };
        match gateway.complete(request) {
            Ok(response) => {
                let text = response.text.trim().to_string();
                if text.is_empty() {
                    break;
                }
                candidates.push(text);
                revisions += 1;
            }
            Err(_) => break,
        }
    }
    // In-band candidate if any (the loop stops at the first), else closest
    // to the target; ties prefer fewer words.
    let chosen = candidates
        .iter()
        .position(|c| budget.in_band(count_words(c), target))
        .unwrap_or_else(|| {
            let mut best = 0usize;
            let mut best_key = (usize::MAX, usize::MAX);
            for (i, c) in candidates.iter().enumerate() {
                let w = count_words(c);
                let key = (w.abs_diff(target), w);
                if key < best_key {
                    best_key = key;
                    best = i;
                }
            }
            best
        });
    let text = candidates[chosen].clone();
    let word_count = count_words(&text);
    let status = if budget.in_band(word_count, target) {
        UnitStatus::Ok
    } else {
        UnitStatus::Degraded
    };
    UnitText {
        word_count,
        text,
        attempts: initial.attempts + revisions,
        length_revisions: revisions,
        status,
        ..initial
    }
}

fn process_unit(
    gateway: &Gateway,
    unit_plan: &UnitPlan,
    spec: &TaskSpec,
    check: &CheckSet,
    budget: &GenerationBudget,
) -> UnitText {
    let adjusted = if budget.plan_adjust_enabled {
        plan_adjust(gateway, unit_plan, spec, check, budget)
    } else {
        unit_plan.clone()
    };
    let initial = generate_unit(gateway, &adjusted, spec);
    let mut finished = if initial.status == UnitStatus::Failed {
        initial
    } else {
        length_revise(gateway, initial, &adjusted, spec, budget)
    };
    finished.residual_after =
        residual_for_unit(check, finished.index, &finished.text).unwrap_or_default();
    finished
}

// ---------------------------------------------------------------------------
// Run
// ---------------------------------------------------------------------------

/// Generate the whole document from a finalized plan. Units are processed
/// by a worker pool of at most `max_parallel_units` threads and merged in
/// index order. Units missing from the plan get a placeholder plan rather
/// than being skipped, so the document always covers 1..=n.
pub fn run_generation(
    gateway: &Gateway,
    plan: &Plan,
    spec: &TaskSpec,
    budget: &GenerationBudget,
) -> Result<Document, EngineError> {
    budget.validate()?;
    let check = expand_check_set(spec)?;
    let n = spec.unit_count;

    let jobs: VecDeque<UnitPlan> = (1..=n)
        .map(|i| match plan.unit(i) {
            Some(u) => u.clone(),
            None => UnitPlan {
                index: i,
                label: spec.unit_label(i),
                directives: vec![EMPTY_UNIT_DIRECTIVE.to_string()],
            },
        })
        .collect();
    let queue = Mutex::new(jobs);
    let workers = budget.max_parallel_units.min(n);

    let mut units: Vec<UnitText> = Vec::with_capacity(n);
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<UnitText>();
        for _ in 0..workers {
            let tx = tx.clone();
            let queue = &queue;
            let check = &check;
            scope.spawn(move || loop {
                let job = queue.lock().unwrap().pop_front();
                match job {
                    Some(unit_plan) => {
                        let unit = process_unit(gateway, &unit_plan, spec, check, budget);
                        if tx.send(unit).is_err() {
                            break;
                        }
                    }
                    None => break,
                }
            });
        }
        drop(tx);
        for unit in rx {
            units.push(unit);
        }
    });

    units.sort_by_key(|u| u.index);
    let total_words = units.iter().map(|u| u.word_count).sum();
    Ok(Document {
        task_id: spec.task_id.clone(),
        units,
        total_words,
        plan_snapshot: plan.clone(),
    })
}

/// The document file format: per unit a `## <label>` header, the unit text,
/// and a blank line, in index order.
pub fn render_document(doc: &Document) -> String {
    let mut out = String::new();
    for unit in &doc.units {
        out.push_str(&format!("## {}\n{}\n\n", unit.label, unit.text));
    }
    out
}

/// The units of a document as a map, for scoring without re-segmentation.
pub fn document_units(doc: &Document) -> BTreeMap<usize, String> {
    doc.units
        .iter()
        .map(|u| (u.index, u.text.clone()))
        .collect()
}
