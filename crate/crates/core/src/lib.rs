//! Plan-driven generation of long structured documents under hard content
//! and length constraints.
//!
//! The pipeline has three phases. A planning agent asks the model for a
//! per-unit outline and iterates on it until it covers every required
//! content item and parses cleanly. A pool of generation workers then writes
//! each unit from its outline, adjusting the outline, generating text, and
//! revising length against a per-unit word target. Deterministic monitors
//! (content coverage, plan format, word counts) drive every revision loop,
//! and a scoring module reports completion and per-instruction-kind
//! accuracies for any document, ours or not.
//!
//! All model access goes through [`gateway`], which also ships a scripted
//! backend so the whole pipeline runs offline and deterministically in
//! tests. [`taskgen`] fabricates tasks, reference documents, and backend
//! scripts for that purpose.

pub mod cli;
pub mod constraint;
pub mod engine;
pub mod eval;
pub mod gateway;
pub mod plan;
pub mod planner;
pub mod taskgen;

pub use constraint::{
    expand_check_set, residual_for_unit, validate_task, CheckEntry, CheckSet, ContentItem,
    Instruction, InstructionKind, MatchMode, TaskSpec,
};
pub use engine::{run_generation, Document, GenerationBudget, UnitStatus, UnitText};
pub use eval::{
    count_words, emit_report, evaluate, normalize, segment_document, CompletionRule, EvalOptions,
    EvalReport, ReportFormat,
};
pub use gateway::{Gateway, GatewayConfig, GatewayError, LlmRequest, LlmResponse};
pub use plan::{parse_plan, render_plan, repair_plan, Plan, PlanDefect, UnitPlan};
pub use planner::{plan_with_revisions, review_plan, PlanReview, PlanningBudget};
pub use taskgen::{make_reference_document, make_task, GenProfile, Shape};
