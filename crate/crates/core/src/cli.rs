//! Operator entry point: run the full pipeline, plan only, evaluate any
//! document, generate synthetic tasks, and re-score prior runs.
//!
//! Exit codes are stable: 0 completion (even degraded), 2 configuration or
//! file errors, 3 planning failure in abort mode. Commands write only into
//! their output directory. Secrets travel only through environment
//! variables named in the gateway config.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{validate_task, Instruction, MatchMode, TaskSpec};
use crate::engine::{
    render_document, run_generation, Document, EngineError, GenerationBudget, UnitText,
};
use crate::eval::{
    emit_report, evaluate, segment_document, CompletionRule, EvalOptions, EvalReport,
    ReportFormat,
};
use crate::gateway::templates::PromptSet;
use crate::gateway::trace::TraceLog;
use crate::gateway::{BackendKind, Gateway, GatewayConfig};
use crate::plan::render_plan;
use crate::planner::{plan_with_revisions, FailMode, PlanningBudget, PlanningError, PlanningOutcome};
use crate::taskgen::{make_task, GenProfile, Shape};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PLANNING: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("planning: {0}")]
    Planning(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Planning(_) => EXIT_PLANNING,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(
    name = "planwright",
    version,
    about = "Plan, generate, and score long structured documents"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full pipeline: plan, generate, evaluate, write artifacts
    Run(RunArgs),
    /// Produce and review a plan, then stop
    Plan(RunArgs),
    /// Score an existing document against a task
    Evaluate(EvaluateArgs),
    /// Generate a synthetic task file
    Taskgen(TaskgenArgs),
    /// Re-score a prior run directory from its own artifacts
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Scripted,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FailModeArg {
    BestEffort,
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatchModeArg {
    Substring,
    AllKeywords,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CompletionRuleArg {
    PerUnit,
    StrictPrefix,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Task file (taskspec/1 JSON)
    #[arg(long)]
    pub task: PathBuf,
    /// Output directory for all artifacts
    #[arg(long)]
    pub out: PathBuf,
    /// Run-config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendArg>,
    /// Script file for the scripted backend
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Chat-completions endpoint (http backend)
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the API key
    #[arg(long)]
    pub api_key_env: Option<String>,
    /// Gateway config file (JSON)
    #[arg(long)]
    pub gateway_config: Option<PathBuf>,
    /// Directory of prompt template overrides (p_plan.txt, ...)
    #[arg(long)]
    pub prompt_dir: Option<PathBuf>,
    #[arg(long)]
    pub max_plan_revisions: Option<u32>,
    #[arg(long, value_enum)]
    pub fail_mode: Option<FailModeArg>,
    #[arg(long)]
    pub max_parallel_units: Option<usize>,
    #[arg(long)]
    pub max_adjust_rounds: Option<u32>,
    #[arg(long)]
    pub max_length_revisions: Option<u32>,
    /// Accepted word-count band as fractions of the target, e.g. "1.0,1.5"
    #[arg(long)]
    pub length_band: Option<String>,
    /// Disable the per-unit plan-adjust step
    #[arg(long)]
    pub no_plan_adjust: bool,
    /// Override every content item's match mode for this run
    #[arg(long, value_enum)]
    pub match_mode: Option<MatchModeArg>,
    #[arg(long, value_enum)]
    pub completion_rule: Option<CompletionRuleArg>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub task: PathBuf,
    #[arg(long)]
    pub document: PathBuf,
    /// Directory for report artifacts; omit to only print the table
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report formats to write (table, csv, structured)
    #[arg(long, value_delimiter = ',')]
    pub format: Vec<String>,
    #[arg(long, value_enum)]
    pub match_mode: Option<MatchModeArg>,
    #[arg(long, value_enum)]
    pub completion_rule: Option<CompletionRuleArg>,
}

#[derive(Debug, Args)]
pub struct TaskgenArgs {
    /// temporal (52x200), spatial (100x150), or custom
    #[arg(long)]
    pub shape: String,
    /// Unit count (custom shape)
    #[arg(long)]
    pub units: Option<usize>,
    /// Per-unit word target (custom shape)
    #[arg(long)]
    pub target_length: Option<usize>,
    #[arg(long)]
    pub singles: Option<usize>,
    #[arg(long)]
    pub ranges: Option<usize>,
    #[arg(long)]
    pub periodics: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Where to write the task file
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// A directory previously written by `run`
    #[arg(long)]
    pub run_dir: PathBuf,
    #[arg(long, value_enum)]
    pub match_mode: Option<MatchModeArg>,
    #[arg(long, value_enum)]
    pub completion_rule: Option<CompletionRuleArg>,
}

// ---------------------------------------------------------------------------
// Run-config file
// ---------------------------------------------------------------------------

/// File form of the run settings; every key mirrors a flag and flags win.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfigFile {
    pub gateway: Option<GatewayConfig>,
    pub gateway_config: Option<PathBuf>,
    pub prompt_dir: Option<PathBuf>,
    pub max_plan_revisions: Option<u32>,
    pub fail_mode: Option<String>,
    pub max_parallel_units: Option<usize>,
    pub max_adjust_rounds: Option<u32>,
    pub max_length_revisions: Option<u32>,
    pub length_band: Option<(f64, f64)>,
    pub plan_adjust: Option<bool>,
    pub match_mode: Option<MatchMode>,
    pub completion_rule: Option<CompletionRule>,
}

struct Resolved {
    gateway_config: GatewayConfig,
    prompt_dir: Option<PathBuf>,
    planning: PlanningBudget,
    generation: GenerationBudget,
    eval: EvalOptions,
    match_mode: Option<MatchMode>,
}

fn parse_band(text: &str) -> Result<(f64, f64), CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(CliError::Config(format!(
            "length band must be \"lo,hi\", got {text:?}"
        )));
    }
    let lo: f64 = parts[0]
        .parse()
        .map_err(|_| CliError::Config(format!("bad band bound {:?}", parts[0])))?;
    let hi: f64 = parts[1]
        .parse()
        .map_err(|_| CliError::Config(format!("bad band bound {:?}", parts[1])))?;
    Ok((lo, hi))
}

fn resolve(args: &RunArgs) -> Result<Resolved, CliError> {
    let file: RunConfigFile = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("config file {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("config file {}: {e}", path.display())))?
        }
        None => RunConfigFile::default(),
    };

    let mut gateway_config = if let Some(path) = args.gateway_config.as_ref().or(file.gateway_config.as_ref()) {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("gateway config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("gateway config {}: {e}", path.display())))?
    } else {
        file.gateway.clone().unwrap_or_default()
    };
    if let Some(backend) = args.backend {
        gateway_config.backend = match backend {
            BackendArg::Scripted => BackendKind::Scripted,
            BackendArg::Http => BackendKind::Http,
        };
    }
    if let Some(script) = &args.script {
        gateway_config.script = Some(script.clone());
    }
    if let Some(endpoint) = &args.endpoint {
        gateway_config.endpoint = Some(endpoint.clone());
    }
    if let Some(model) = &args.model {
        gateway_config.model = Some(model.clone());
    }
    if let Some(var) = &args.api_key_env {
        gateway_config.api_key_env = Some(var.clone());
    }

    let defaults = PlanningBudget::default();
    let planning = PlanningBudget {
        max_plan_revisions: args
            .max_plan_revisions
            .or(file.max_plan_revisions)
            .unwrap_or(defaults.max_plan_revisions),
        fail_mode: match args.fail_mode {
            Some(FailModeArg::Abort) => FailMode::Abort,
            Some(FailModeArg::BestEffort) => FailMode::BestEffort,
            None => match file.fail_mode.as_deref() {
                Some("abort") => FailMode::Abort,
                Some("best_effort") | Some("best-effort") | None => FailMode::BestEffort,
                Some(other) => {
                    return Err(CliError::Config(format!("unknown fail_mode {other:?}")))
                }
            },
        },
    };

    let gen_defaults = GenerationBudget::default();
    let band = match &args.length_band {
        Some(text) => parse_band(text)?,
        None => file.length_band.unwrap_or(gen_defaults.length_band),
    };
    let generation = GenerationBudget {
        max_parallel_units: args
            .max_parallel_units
            .or(file.max_parallel_units)
            .unwrap_or(gen_defaults.max_parallel_units),
        max_adjust_rounds: args
            .max_adjust_rounds
            .or(file.max_adjust_rounds)
            .unwrap_or(gen_defaults.max_adjust_rounds),
        max_length_revisions: args
            .max_length_revisions
            .or(file.max_length_revisions)
            .unwrap_or(gen_defaults.max_length_revisions),
        length_band: band,
        plan_adjust_enabled: if args.no_plan_adjust {
            false
        } else {
            file.plan_adjust.unwrap_or(true)
        },
    };

    let completion_rule = match args.completion_rule {
        Some(CompletionRuleArg::PerUnit) => CompletionRule::PerUnit,
        Some(CompletionRuleArg::StrictPrefix) => CompletionRule::StrictPrefix,
        None => file.completion_rule.unwrap_or_default(),
    };
    let match_mode = match args.match_mode {
        Some(MatchModeArg::Substring) => Some(MatchMode::Substring),
        Some(MatchModeArg::AllKeywords) => Some(MatchMode::AllKeywords),
        None => file.match_mode,
    };

    Ok(Resolved {
        gateway_config,
        prompt_dir: args.prompt_dir.clone().or(file.prompt_dir),
        planning,
        generation,
        eval: EvalOptions { completion_rule },
        match_mode,
    })
}

// ---------------------------------------------------------------------------
// Shared steps
// ---------------------------------------------------------------------------

fn load_task(path: &Path, match_mode: Option<MatchMode>) -> Result<TaskSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("task file {}: {e}", path.display())))?;
    let mut spec = TaskSpec::from_json(&text)
        .map_err(|e| CliError::Config(format!("task file {}: {e}", path.display())))?;
    if let Some(mode) = match_mode {
        override_match_mode(&mut spec, mode);
    }
    let violations = validate_task(&spec);
    if !violations.is_empty() {
        let lines: Vec<String> = violations
            .iter()
            .map(|v| format!("{} ({})", v.code, v.detail))
            .collect();
        return Err(CliError::Config(format!(
            "task file {} is invalid: {}",
            path.display(),
            lines.join("; ")
        )));
    }
    Ok(spec)
}

fn override_match_mode(spec: &mut TaskSpec, mode: MatchMode) {
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

fn load_prompts(dir: &Option<PathBuf>) -> Result<PromptSet, CliError> {
    match dir {
        Some(dir) => PromptSet::load_overrides(dir).map_err(config_err),
        None => Ok(PromptSet::default()),
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    std::fs::write(dir.join(name), contents)
        .map_err(|e| CliError::Config(format!("writing {name}: {e}")))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    write_file(dir, name, &text)
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Planning(#[from] PlanningError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

pub struct PipelineOutput {
    pub planning: PlanningOutcome,
    pub document: Document,
    pub document_text: String,
    pub report: EvalReport,
}

/// Plan, generate, and score in one pass. Scoring goes through the same
/// segment-then-evaluate path as `evaluate`, so the written document file
/// and the run report can never disagree.
pub fn run_pipeline(
    gateway: &Gateway,
    spec: &TaskSpec,
    planning_budget: &PlanningBudget,
    generation_budget: &GenerationBudget,
    eval_options: &EvalOptions,
) -> Result<PipelineOutput, PipelineError> {
    let planning = plan_with_revisions(gateway, spec, planning_budget)?;
    let document = run_generation(gateway, &planning.plan, spec, generation_budget)?;
    let document_text = render_document(&document);
    let segmentation = segment_document(&document_text, spec);
    let report = evaluate(&segmentation.units, spec, eval_options)
        .map_err(|e| PipelineError::Engine(EngineError::InvalidSpec(e)))?;
    Ok(PipelineOutput {
        planning,
        document,
        document_text,
        report,
    })
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct PlanReviewArtifact<'a> {
    acceptable: bool,
    coverage_deficiencies: &'a [crate::planner::PlanDeficiency],
    format_defects: &'a [crate::plan::PlanDefect],
    attempts: &'a [crate::planner::PlanAttempt],
}

#[derive(Serialize)]
struct UnitMeta<'a> {
    index: usize,
    label: &'a str,
    attempts: usize,
    length_revisions: usize,
    status: crate::engine::UnitStatus,
    word_count: usize,
    unmet_requirements: usize,
}

#[derive(Serialize)]
struct RunMeta<'a> {
    schema: &'static str,
    task_id: &'a str,
    gateway_calls: usize,
    prompt_tokens: usize,
    completion_tokens: usize,
    plan_attempts: usize,
    total_words: usize,
    units: Vec<UnitMeta<'a>>,
}

fn unit_meta(units: &[UnitText]) -> Vec<UnitMeta<'_>> {
    units
        .iter()
        .map(|u| UnitMeta {
            index: u.index,
            label: &u.label,
            attempts: u.attempts,
            length_revisions: u.length_revisions,
            status: u.status,
            word_count: u.word_count,
            unmet_requirements: u.residual_after.len(),
        })
        .collect()
}

fn write_reports(dir: &Path, report: &EvalReport, formats: &[ReportFormat]) -> Result<(), CliError> {
    for format in formats {
        let (name, text) = match format {
            ReportFormat::Table => ("report.txt", emit_report(report, ReportFormat::Table)),
            ReportFormat::Csv => ("report.csv", emit_report(report, ReportFormat::Csv)),
            ReportFormat::Structured => ("report.json", emit_report(report, ReportFormat::Structured)),
        };
        write_file(dir, name, &text)?;
    }
    Ok(())
}

const ALL_FORMATS: [ReportFormat; 3] = [
    ReportFormat::Table,
    ReportFormat::Csv,
    ReportFormat::Structured,
];

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn prepare_out_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::Config(format!("output directory {}: {e}", path.display())))
}

fn build_gateway(resolved: &Resolved, out_dir: Option<&Path>) -> Result<Gateway, CliError> {
    let prompts = load_prompts(&resolved.prompt_dir)?;
    let trace = match out_dir {
        Some(dir) => Arc::new(
            TraceLog::with_file(&dir.join("trace.jsonl"))
                .map_err(|e| CliError::Config(format!("trace file: {e}")))?,
        ),
        None => Arc::new(TraceLog::in_memory()),
    };
    Gateway::from_config(&resolved.gateway_config, prompts, trace).map_err(config_err)
}

fn planning_error(e: PipelineError) -> CliError {
    match e {
        PipelineError::Planning(inner) => CliError::Planning(inner.to_string()),
        PipelineError::Engine(inner) => CliError::Config(inner.to_string()),
    }
}

pub fn cmd_run(args: &RunArgs) -> Result<i32, CliError> {
    let resolved = resolve(args)?;
    let spec = load_task(&args.task, resolved.match_mode)?;
    prepare_out_dir(&args.out)?;
    let gateway = build_gateway(&resolved, Some(&args.out))?;

    let output = run_pipeline(
        &gateway,
        &spec,
        &resolved.planning,
        &resolved.generation,
        &resolved.eval,
    )
    .map_err(planning_error)?;

    write_file(&args.out, "task.json", &spec.to_json())?;
    write_file(&args.out, "plan.txt", &render_plan(&output.planning.plan))?;
    write_json(
        &args.out,
        "plan_review.json",
        &PlanReviewArtifact {
            acceptable: output.planning.review.acceptable,
            coverage_deficiencies: &output.planning.review.coverage_deficiencies,
            format_defects: &output.planning.review.format_defects,
            attempts: &output.planning.attempts,
        },
    )?;
    write_file(&args.out, "document.md", &output.document_text)?;
    let (prompt_tokens, completion_tokens) = gateway.trace().token_totals();
    write_json(
        &args.out,
        "run_meta.json",
        &RunMeta {
            schema: "runmeta/1",
            task_id: &spec.task_id,
            gateway_calls: gateway.trace().call_count(),
            prompt_tokens,
            completion_tokens,
            plan_attempts: output.planning.attempts.len(),
            total_words: output.document.total_words,
            units: unit_meta(&output.document.units),
        },
    )?;
    write_reports(&args.out, &output.report, &ALL_FORMATS)?;
    print!("{}", emit_report(&output.report, ReportFormat::Table));
    eprintln!(
        "run complete: {} gateway call(s), artifacts in {}",
        gateway.trace().call_count(),
        args.out.display()
    );
    Ok(EXIT_OK)
}

pub fn cmd_plan(args: &RunArgs) -> Result<i32, CliError> {
    let resolved = resolve(args)?;
    let spec = load_task(&args.task, resolved.match_mode)?;
    prepare_out_dir(&args.out)?;
    let gateway = build_gateway(&resolved, Some(&args.out))?;

    let outcome = plan_with_revisions(&gateway, &spec, &resolved.planning).map_err(|e| match e {
        PlanningError::Failed { .. } => CliError::Planning(e.to_string()),
        PlanningError::Gateway(_) => CliError::Planning(e.to_string()),
        PlanningError::InvalidSpec(inner) => CliError::Config(inner.to_string()),
    })?;

    write_file(&args.out, "task.json", &spec.to_json())?;
    write_file(&args.out, "plan.txt", &render_plan(&outcome.plan))?;
    write_json(
        &args.out,
        "plan_review.json",
        &PlanReviewArtifact {
            acceptable: outcome.review.acceptable,
            coverage_deficiencies: &outcome.review.coverage_deficiencies,
            format_defects: &outcome.review.format_defects,
            attempts: &outcome.attempts,
        },
    )?;
    eprintln!(
        "plan written: acceptable={}, {} attempt(s)",
        outcome.review.acceptable,
        outcome.attempts.len()
    );
    Ok(EXIT_OK)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<i32, CliError> {
    let match_mode = match args.match_mode {
        Some(MatchModeArg::Substring) => Some(MatchMode::Substring),
        Some(MatchModeArg::AllKeywords) => Some(MatchMode::AllKeywords),
        None => None,
    };
    let spec = load_task(&args.task, match_mode)?;
    let document = std::fs::read_to_string(&args.document)
        .map_err(|e| CliError::Config(format!("document {}: {e}", args.document.display())))?;
    let options = EvalOptions {
        completion_rule: match args.completion_rule {
            Some(CompletionRuleArg::StrictPrefix) => CompletionRule::StrictPrefix,
            _ => CompletionRule::PerUnit,
        },
    };
    let formats: Vec<ReportFormat> = if args.format.is_empty() {
        ALL_FORMATS.to_vec()
    } else {
        args.format
            .iter()
            .map(|f| f.parse::<ReportFormat>().map_err(config_err))
            .collect::<Result<_, _>>()?
    };

    let segmentation = segment_document(&document, &spec);
    for warning in &segmentation.warnings {
        eprintln!("segmentation: {warning}");
    }
    let report = evaluate(&segmentation.units, &spec, &options).map_err(config_err)?;
    if let Some(out) = &args.out {
        prepare_out_dir(out)?;
        write_reports(out, &report, &formats)?;
    }
    print!("{}", emit_report(&report, ReportFormat::Table));
    Ok(EXIT_OK)
}

pub fn cmd_taskgen(args: &TaskgenArgs) -> Result<i32, CliError> {
    let shape = match args.shape.as_str() {
        "temporal" => Shape::Temporal,
        "spatial" => Shape::Spatial,
        "custom" => Shape::Custom {
            units: args
                .units
                .ok_or_else(|| CliError::Config("custom shape needs --units".into()))?,
            target_length: args
                .target_length
                .ok_or_else(|| CliError::Config("custom shape needs --target-length".into()))?,
        },
        other => return Err(CliError::Config(format!("unknown shape {other:?}"))),
    };
    let mut profile = GenProfile::new(shape, args.seed);
    if let Some(v) = args.singles {
        profile.singles = v;
    }
    if let Some(v) = args.ranges {
        profile.ranges = v;
    }
    if let Some(v) = args.periodics {
        profile.periodics = v;
    }
    let spec = make_task(&profile).map_err(config_err)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::Config(format!("output directory: {e}")))?;
        }
    }
    std::fs::write(&args.out, spec.to_json())
        .map_err(|e| CliError::Config(format!("writing {}: {e}", args.out.display())))?;
    eprintln!(
        "task {} written to {} ({} units x {} words)",
        spec.task_id,
        args.out.display(),
        spec.unit_count,
        spec.target_length
    );
    Ok(EXIT_OK)
}

pub fn cmd_replay(args: &ReplayArgs) -> Result<i32, CliError> {
    let match_mode = match args.match_mode {
        Some(MatchModeArg::Substring) => Some(MatchMode::Substring),
        Some(MatchModeArg::AllKeywords) => Some(MatchMode::AllKeywords),
        None => None,
    };
    let task_path = args.run_dir.join("task.json");
    let document_path = args.run_dir.join("document.md");
    let spec = load_task(&task_path, match_mode)?;
    let document = std::fs::read_to_string(&document_path)
        .map_err(|e| CliError::Config(format!("document {}: {e}", document_path.display())))?;
    let options = EvalOptions {
        completion_rule: match args.completion_rule {
            Some(CompletionRuleArg::StrictPrefix) => CompletionRule::StrictPrefix,
            _ => CompletionRule::PerUnit,
        },
    };
    let prior = std::fs::read_to_string(args.run_dir.join("report.json")).ok();
    let segmentation = segment_document(&document, &spec);
    let report = evaluate(&segmentation.units, &spec, &options).map_err(config_err)?;
    write_reports(&args.run_dir, &report, &ALL_FORMATS)?;
    if let Some(prior) = prior {
        let fresh = emit_report(&report, ReportFormat::Structured);
        if prior == fresh {
            eprintln!("replay matches the stored report");
        } else {
            eprintln!("replay differs from the stored report (different flags or edited artifacts)");
        }
    }
    print!("{}", emit_report(&report, ReportFormat::Table));
    Ok(EXIT_OK)
}

/// Binary entry: returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Plan(args) => cmd_plan(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Taskgen(args) => cmd_taskgen(args),
        Command::Replay(args) => cmd_replay(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
