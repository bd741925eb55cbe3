//! The planning agent: ask the model for an initial plan, monitor it
//! against the check set and the format contract, and loop revise → repair
//! → review until the plan is acceptable or the revision budget runs out.
//!
//! The loop is sequential by nature (each revision is prompted with the
//! previous review); the resulting plan is immutable and shared with all
//! generation workers.

use serde::Serialize;
use thiserror::Error;

use crate::constraint::{
    expand_check_set, residual_for_unit, CheckSet, ContentItem, InvalidTask, TaskSpec,
};
use crate::gateway::templates::TemplateName;
use crate::gateway::trace::TraceEvent;
use crate::gateway::{slots, Gateway, GatewayError};
use crate::plan::{parse_plan, render_plan, repair_plan, Plan, PlanDefect};

/// One requirement the plan does not cover.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanDeficiency {
    pub unit: usize,
    pub item: ContentItem,
}

/// The monitoring signal for one plan: content coverage gaps plus
/// unrepaired format defects. Acceptable means both lists are empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanReview {
    pub coverage_deficiencies: Vec<PlanDeficiency>,
    pub format_defects: Vec<PlanDefect>,
    pub acceptable: bool,
}

impl PlanReview {
    fn new(coverage_deficiencies: Vec<PlanDeficiency>, format_defects: Vec<PlanDefect>) -> Self {
        let acceptable = coverage_deficiencies.is_empty() && format_defects.is_empty();
        Self {
            coverage_deficiencies,
            format_defects,
            acceptable,
        }
    }

    pub fn total_deficiencies(&self) -> usize {
        self.coverage_deficiencies.len() + self.format_defects.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailMode {
    /// A still-deficient plan proceeds to generation anyway.
    #[default]
    BestEffort,
    /// A still-deficient plan fails the run.
    Abort,
}

#[derive(Debug, Clone, Copy)]
pub struct PlanningBudget {
    pub max_plan_revisions: u32,
    pub fail_mode: FailMode,
}

impl Default for PlanningBudget {
    fn default() -> Self {
        Self {
            max_plan_revisions: 3,
            fail_mode: FailMode::BestEffort,
        }
    }
}

#[derive(Debug, Error)]
pub enum PlanningError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    InvalidSpec(#[from] InvalidTask),
    #[error("planning failed: {coverage} uncovered requirement(s), {defects} format defect(s) after {attempts} attempt(s)")]
    Failed {
        coverage: usize,
        defects: usize,
        attempts: usize,
    },
}

/// One entry of the revision trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanAttempt {
    pub attempt: usize,
    pub template: String,
    pub coverage_deficiencies: usize,
    pub format_defects: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanningOutcome {
    pub plan: Plan,
    pub review: PlanReview,
    pub attempts: Vec<PlanAttempt>,
}

// ---------------------------------------------------------------------------
// Prompt blocks
// ---------------------------------------------------------------------------

/// Render the task contract — shape, per-unit length, and every instruction
/// with its concrete target units — for the `{instructions}` slot.
pub fn instruction_block(spec: &TaskSpec) -> String {
    use crate::constraint::Instruction;
    let n = spec.unit_count;
    let mut out = format!(
        "The document has {n} units, labeled \"{}\" through \"{}\".\n",
        spec.unit_label(1),
        spec.unit_label(n)
    );
    out.push_str(&format!(
        "Each unit must contain at least {} words; the whole document at least {} words.\n",
        spec.target_length,
        spec.effective_min_total_words()
    ));
    if spec.instructions.is_empty() {
        out.push_str("There are no content placement requirements.\n");
        return out;
    }
    out.push_str("Content placement requirements:\n");
    for ins in &spec.instructions {
        match ins {
            Instruction::Single { position, content } => {
                out.push_str(&format!(
                    "- {} must include: \"{}\"\n",
                    spec.unit_label(*position),
                    content.phrase
                ));
            }
            Instruction::Range {
                start,
                end,
                contents,
            } => {
                out.push_str(&format!(
                    "- In order across {} through {}:\n",
                    spec.unit_label(*start),
                    spec.unit_label(*end)
                ));
                for (k, item) in contents.iter().enumerate() {
                    out.push_str(&format!(
                        "  - {} must include: \"{}\"\n",
                        spec.unit_label(start + k),
                        item.phrase
                    ));
                }
            }
            Instruction::Periodic {
                interval,
                repetitions,
                content,
            } => {
                let units: Vec<String> = (1..=*repetitions)
                    .map(|j| spec.unit_label(j * interval))
                    .collect();
                out.push_str(&format!(
                    "- Every {interval} unit(s), {repetitions} time(s) ({}), include: \"{}\"\n",
                    units.join(", "),
                    content.phrase
                ));
            }
        }
    }
    out
}

/// The concrete plan-format contract for this task, appended to the
/// `{instructions}` slot of plan prompts.
pub fn plan_format_contract(spec: &TaskSpec) -> String {
    format!(
        "Plan format:\nHeader line: PLAN {} UNITS {}\nThen one line per unit: #<index> | <unit label> | <directive>; <directive>\nIndices run 1 through {} in order, one line each.\n",
        spec.task_id, spec.unit_count, spec.unit_count
    )
}

fn plan_slots(spec: &TaskSpec) -> std::collections::BTreeMap<String, String> {
    let instructions = format!("{}\n{}", instruction_block(spec), plan_format_contract(spec));
    slots(&[
        ("scenario", spec.scenario.as_str()),
        ("instructions", instructions.as_str()),
    ])
}

fn deficiency_block(review: &PlanReview, spec: &TaskSpec) -> String {
    let mut out = String::new();
    for d in &review.coverage_deficiencies {
        out.push_str(&format!(
            "- {} is missing required content: \"{}\"\n",
            spec.unit_label(d.unit),
            d.item.phrase
        ));
    }
    for f in &review.format_defects {
        out.push_str(&format!("- plan format: {f}\n"));
    }
    if out.is_empty() {
        out.push_str("- none\n");
    }
    out
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Check plan coverage: every check-set entry's phrase must match the
/// concatenated directives of its target unit, under the same match
/// semantics the document evaluator uses. Pure.
pub fn review_plan(plan: &Plan, check: &CheckSet) -> PlanReview {
    let mut deficiencies = Vec::new();
    for unit in check.units() {
        let text = plan
            .unit(unit)
            .map(|u| u.directive_text())
            .unwrap_or_default();
        // unit indices come from the check set, so in range by construction
        for entry in residual_for_unit(check, unit, &text).expect("check-set unit in range") {
            deficiencies.push(PlanDeficiency {
                unit,
                item: entry.item,
            });
        }
    }
    PlanReview::new(deficiencies, Vec::new())
}

fn parse_and_review(
    spec: &TaskSpec,
    check: &CheckSet,
    text: &str,
    revision_count: usize,
) -> (Plan, PlanReview) {
    let parsed = parse_plan(text, spec.unit_count);
    let (mut plan, unrepaired) = repair_plan(&parsed);
    plan.task_id = spec.task_id.clone();
    plan.revision_count = revision_count;
    let coverage = review_plan(&plan, check);
    let review = PlanReview::new(coverage.coverage_deficiencies, unrepaired);
    (plan, review)
}

/// One `p_plan` call, parsed, repaired, and reviewed.
pub fn generate_initial_plan(
    gateway: &Gateway,
    spec: &TaskSpec,
) -> Result<(Plan, PlanReview), PlanningError> {
    let check = expand_check_set(spec)?;
    let response = gateway.complete(gateway.request(TemplateName::Plan, plan_slots(spec))?)?;
    Ok(parse_and_review(spec, &check, &response.text, 0))
}

/// The full planning loop. Returns the best plan seen (fewest total
/// deficiencies, ties to the latest attempt), its review, and the attempt
/// trace. Gateway calls are bounded by `1 + max_plan_revisions`.
pub fn plan_with_revisions(
    gateway: &Gateway,
    spec: &TaskSpec,
    budget: &PlanningBudget,
) -> Result<PlanningOutcome, PlanningError> {
    let check = expand_check_set(spec)?;

    let response = gateway.complete(gateway.request(TemplateName::Plan, plan_slots(spec))?)?;
    let (mut current_plan, mut current_review) =
        parse_and_review(spec, &check, &response.text, 0);

    let mut attempts = Vec::new();
    let mut record = |attempt: usize, template: TemplateName, review: &PlanReview| {
        let entry = PlanAttempt {
            attempt,
            template: template.as_str().to_string(),
            coverage_deficiencies: review.coverage_deficiencies.len(),
            format_defects: review.format_defects.len(),
        };
        gateway.trace().record(TraceEvent::PlanAttempt {
            attempt: entry.attempt,
            template: entry.template.clone(),
            coverage_deficiencies: entry.coverage_deficiencies,
            format_defects: entry.format_defects,
        });
        attempts.push(entry);
    };
    record(0, TemplateName::Plan, &current_review);

    let mut best_plan = current_plan.clone();
    let mut best_review = current_review.clone();

    let mut revision = 0;
    while !current_review.acceptable && revision < budget.max_plan_revisions {
        revision += 1;
        let mut revise_slots = plan_slots(spec);
        revise_slots.insert("unit_plan".into(), render_plan(&current_plan));
        revise_slots.insert(
            "deficiencies".into(),
            deficiency_block(&current_review, spec),
        );
        let response =
            gateway.complete(gateway.request(TemplateName::Revise, revise_slots)?)?;
        let (plan, review) = parse_and_review(spec, &check, &response.text, revision as usize);
        record(revision as usize, TemplateName::Revise, &review);
        // Ties go to the newer attempt: later plans reflect more feedback.
        if review.total_deficiencies() <= best_review.total_deficiencies() {
            best_plan = plan.clone();
            best_review = review.clone();
        }
        current_plan = plan;
        current_review = review;
    }

    if !best_review.acceptable && budget.fail_mode == FailMode::Abort {
        return Err(PlanningError::Failed {
            coverage: best_review.coverage_deficiencies.len(),
            defects: best_review.format_defects.len(),
            attempts: attempts.len(),
        });
    }
    Ok(PlanningOutcome {
        plan: best_plan,
        review: best_review,
        attempts,
    })
}
