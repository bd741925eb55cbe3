//! Python bindings: the main pipeline types and operations, exchanged as
//! JSON strings on the boundary so Python callers can `json.loads` straight
//! into dicts. Everything here runs offline; the scripted backend powers
//! `run_scripted`.

use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use planwright_core::cli::run_pipeline;
use planwright_core::constraint::{validate_task, MatchMode, TaskSpec};
use planwright_core::engine::GenerationBudget;
use planwright_core::eval::{self, CompletionRule, EvalOptions, ReportFormat};
use planwright_core::gateway::limiter::SystemClock;
use planwright_core::gateway::scripted::{Script, ScriptedBackend};
use planwright_core::gateway::templates::PromptSet;
use planwright_core::gateway::trace::TraceLog;
use planwright_core::gateway::{Gateway, GatewayConfig};
use planwright_core::plan;
use planwright_core::planner::{FailMode, PlanningBudget};
use planwright_core::taskgen;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn load_task(task_json: &str) -> PyResult<TaskSpec> {
    TaskSpec::from_json(task_json).map_err(value_err)
}

fn parse_shape(
    shape: &str,
    units: Option<usize>,
    target_length: Option<usize>,
) -> PyResult<taskgen::Shape> {
    match shape {
        "temporal" => Ok(taskgen::Shape::Temporal),
        "spatial" => Ok(taskgen::Shape::Spatial),
        "custom" => Ok(taskgen::Shape::Custom {
            units: units.ok_or_else(|| value_err("custom shape needs units"))?,
            target_length: target_length
                .ok_or_else(|| value_err("custom shape needs target_length"))?,
        }),
        other => Err(value_err(format!("unknown shape {other:?}"))),
    }
}

fn parse_match_mode(mode: Option<&str>) -> PyResult<Option<MatchMode>> {
    match mode {
        None => Ok(None),
        Some("substring") => Ok(Some(MatchMode::Substring)),
        Some("all_keywords") => Ok(Some(MatchMode::AllKeywords)),
        Some(other) => Err(value_err(format!("unknown match mode {other:?}"))),
    }
}

fn eval_options(completion_rule: Option<&str>) -> PyResult<EvalOptions> {
    let completion_rule = match completion_rule {
        None => CompletionRule::PerUnit,
        Some(text) => CompletionRule::from_str(text).map_err(value_err)?,
    };
    Ok(EvalOptions { completion_rule })
}

fn apply_match_mode(spec: &mut TaskSpec, mode: Option<MatchMode>) {
    use planwright_core::constraint::Instruction;
    let Some(mode) = mode else { return };
    for ins in &mut spec.instructions {
        match ins {
            Instruction::Single { content, .. } | Instruction::Periodic { content, .. } => {
                content.match_mode = mode;
            }
            Instruction::Range { contents, .. } => {
                for c in contents {
                    c.match_mode = mode;
                }
            }
        }
    }
}

/// Generate a synthetic task; returns taskspec/1 JSON. Deterministic in
/// `seed`.
#[pyfunction]
#[pyo3(signature = (shape, seed=0, units=None, target_length=None, singles=None, ranges=None, periodics=None))]
#[allow(clippy::too_many_arguments)]
fn make_task_json(
    shape: &str,
    seed: u64,
    units: Option<usize>,
    target_length: Option<usize>,
    singles: Option<usize>,
    ranges: Option<usize>,
    periodics: Option<usize>,
) -> PyResult<String> {
    let mut profile = taskgen::GenProfile::new(parse_shape(shape, units, target_length)?, seed);
    if let Some(v) = singles {
        profile.singles = v;
    }
    if let Some(v) = ranges {
        profile.ranges = v;
    }
    if let Some(v) = periodics {
        profile.periodics = v;
    }
    Ok(taskgen::make_task(&profile).map_err(value_err)?.to_json())
}

/// Every invariant violation in a task, as strings; empty means valid.
#[pyfunction]
fn validate_task_json(task_json: &str) -> PyResult<Vec<String>> {
    let spec = load_task(task_json)?;
    Ok(validate_task(&spec)
        .iter()
        .map(|v| format!("{}: {}", v.code, v.detail))
        .collect())
}

/// Expand a task's instructions into the per-unit check set; returns a JSON
/// list of {unit, kind, instruction, item_id, phrase}.
#[pyfunction]
fn expand_check_set_json(task_json: &str) -> PyResult<String> {
    let spec = load_task(task_json)?;
    let check = planwright_core::expand_check_set(&spec).map_err(value_err)?;
    let entries: Vec<serde_json::Value> = check
        .iter()
        .map(|(unit, e)| {
            serde_json::json!({
                "unit": unit,
                "kind": e.instruction.kind.to_string(),
                "instruction": e.instruction.index,
                "item_id": e.item.item_id,
                "phrase": e.item.phrase,
            })
        })
        .collect();
    Ok(serde_json::to_string_pretty(&entries).expect("entries serialize"))
}

/// Lowercase, collapse whitespace, trim.
#[pyfunction]
fn normalize(text: &str) -> String {
    eval::normalize(text)
}

/// Count maximal non-whitespace runs.
#[pyfunction]
fn count_words(text: &str) -> usize {
    eval::count_words(text)
}

/// Parse arbitrary plan text tolerantly and repair it. Returns
/// (canonical_plan_text, parse_defects, unrepaired_defects).
#[pyfunction]
fn parse_and_repair_plan(text: &str, expected_units: usize) -> (String, Vec<String>, Vec<String>) {
    let parsed = plan::parse_plan(text, expected_units);
    let defects = parsed.defects.iter().map(|d| d.to_string()).collect();
    let (repaired, unrepaired) = plan::repair_plan(&parsed);
    (
        plan::render_plan(&repaired),
        defects,
        unrepaired.iter().map(|d| d.to_string()).collect(),
    )
}

/// Score a document against a task; returns evalreport/1 JSON.
#[pyfunction]
#[pyo3(signature = (task_json, document, completion_rule=None, match_mode=None))]
fn evaluate_document(
    task_json: &str,
    document: &str,
    completion_rule: Option<&str>,
    match_mode: Option<&str>,
) -> PyResult<String> {
    let mut spec = load_task(task_json)?;
    apply_match_mode(&mut spec, parse_match_mode(match_mode)?);
    let options = eval_options(completion_rule)?;
    let segmentation = eval::segment_document(document, &spec);
    let report = eval::evaluate(&segmentation.units, &spec, &options).map_err(value_err)?;
    Ok(eval::emit_report(&report, ReportFormat::Structured))
}

/// Build a reference document with known defect injections. Returns
/// (document_text, expected_report_json).
#[pyfunction]
#[pyo3(signature = (task_json, omit_unit=0.0, omit_phrase=0.0, short_unit=0.0, seed=0))]
fn make_reference_document(
    task_json: &str,
    omit_unit: f64,
    omit_phrase: f64,
    short_unit: f64,
    seed: u64,
) -> PyResult<(String, String)> {
    let spec = load_task(task_json)?;
    let rates = taskgen::DefectRates {
        omit_unit,
        omit_phrase,
        short_unit,
    };
    let (doc, expected) =
        taskgen::make_reference_document(&spec, &rates, seed).map_err(value_err)?;
    Ok((doc, eval::emit_report(&expected, ReportFormat::Structured)))
}

/// A backend script (script/1 JSON) for an obedient model on this task.
#[pyfunction]
fn make_perfect_script_json(task_json: &str) -> PyResult<String> {
    let spec = load_task(task_json)?;
    Ok(taskgen::make_perfect_script(&spec).map_err(value_err)?.to_json())
}

/// A fault-injecting backend script (script/1 JSON): the initial plan omits
/// phrases, revision restores only some, and some units come out short.
#[pyfunction]
#[pyo3(signature = (task_json, seed=0, plan_phrase_omission=0.3, revise_restore=0.6, short_unit=0.4))]
fn make_fault_script_json(
    task_json: &str,
    seed: u64,
    plan_phrase_omission: f64,
    revise_restore: f64,
    short_unit: f64,
) -> PyResult<String> {
    let spec = load_task(task_json)?;
    let faults = taskgen::FaultProfile {
        plan_phrase_omission,
        revise_restore,
        short_unit,
        seed,
    };
    Ok(taskgen::make_fault_script(&spec, &faults).map_err(value_err)?.to_json())
}

/// Run the full pipeline offline against a scripted backend. Returns
/// (plan_text, document_text, report_json).
#[pyfunction]
#[pyo3(signature = (task_json, script_json, max_parallel_units=4, max_plan_revisions=3, max_adjust_rounds=2, max_length_revisions=3, plan_adjust=true, completion_rule=None))]
#[allow(clippy::too_many_arguments)]
fn run_scripted(
    task_json: &str,
    script_json: &str,
    max_parallel_units: usize,
    max_plan_revisions: u32,
    max_adjust_rounds: u32,
    max_length_revisions: u32,
    plan_adjust: bool,
    completion_rule: Option<&str>,
) -> PyResult<(String, String, String)> {
    let spec = load_task(task_json)?;
    let script = Script::from_json(script_json).map_err(value_err)?;
    let gateway = Gateway::new(
        &GatewayConfig::default(),
        Arc::new(ScriptedBackend::new(script)),
        PromptSet::default(),
        Arc::new(TraceLog::in_memory()),
        Arc::new(SystemClock::new()),
    )
    .map_err(value_err)?;
    let planning = PlanningBudget {
        max_plan_revisions,
        fail_mode: FailMode::BestEffort,
    };
    let generation = GenerationBudget {
        max_parallel_units,
        max_adjust_rounds,
        max_length_revisions,
        plan_adjust_enabled: plan_adjust,
        ..Default::default()
    };
    let options = eval_options(completion_rule)?;
    let output =
        run_pipeline(&gateway, &spec, &planning, &generation, &options).map_err(value_err)?;
    Ok((
        plan::render_plan(&output.planning.plan),
        output.document_text,
        eval::emit_report(&output.report, ReportFormat::Structured),
    ))
}

/// Fill one of the five prompt templates; slots is a {name: value} dict.
#[pyfunction]
fn fill_template(name: &str, slots: BTreeMap<String, String>) -> PyResult<String> {
    let template = name.parse().map_err(value_err)?;
    planwright_core::gateway::templates::fill_template(&PromptSet::default(), template, &slots)
        .map_err(value_err)
}

#[pymodule]
fn planwright(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(make_task_json, m)?)?;
    m.add_function(wrap_pyfunction!(validate_task_json, m)?)?;
    m.add_function(wrap_pyfunction!(expand_check_set_json, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(count_words, m)?)?;
    m.add_function(wrap_pyfunction!(parse_and_repair_plan, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_document, m)?)?;
    m.add_function(wrap_pyfunction!(make_reference_document, m)?)?;
    m.add_function(wrap_pyfunction!(make_perfect_script_json, m)?)?;
    m.add_function(wrap_pyfunction!(make_fault_script_json, m)?)?;
    m.add_function(wrap_pyfunction!(run_scripted, m)?)?;
    m.add_function(wrap_pyfunction!(fill_template, m)?)?;
    Ok(())
}
