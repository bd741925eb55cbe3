//! Synthetic task fabrication for fully offline testing: tasks in the two
//! benchmark shapes (plus custom sizes), reference documents with known
//! defect injections and an exactly computable expected report, and backend
//! scripts (perfect or fault-injecting) that drive the whole pipeline
//! deterministically.
//!
//! Marker phrases are multi-word with a fixed-width code token
//! (`amber archive m07`), which makes them pairwise non-substrings of each
//! other, and the filler vocabularies share no words with the marker lists,
//! so a fixture can only satisfy a requirement where one was planted.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{
    expand_check_set, validate_task, ContentItem, Instruction, InvalidTask, MatchMode, TaskSpec,
    TASKSPEC_SCHEMA,
};
use crate::eval::{CompletionRule, EvalReport, EvalSettings, Verdict, EVALREPORT_SCHEMA};
use crate::gateway::scripted::{ActionMode, Script, ScriptAction, ScriptRule};
use crate::plan::{render_plan, Plan, UnitPlan};

const MARKER_ADJECTIVES: &[&str] = &[
    "amber", "cobalt", "crimson", "indigo", "jade", "lilac", "maroon", "ochre", "sable", "teal",
    "umber", "violet",
];

const MARKER_NOUNS: &[&str] = &[
    "archive", "beacon", "carousel", "dovetail", "estuary", "foundry", "gazebo", "harbor",
    "isthmus", "junction", "kiln", "lattice",
];

/// Filler for reference documents; no overlap with the marker vocabulary.
const REF_FILLER: &[&str] = &[
    "morning", "light", "settled", "over", "familiar", "streets", "while", "small", "errands",
    "shaped", "another", "steady", "stretch", "of", "time", "spent", "keeping", "things", "in",
    "order",
];

/// Distinct marker phrases, pairwise non-substrings by construction.
pub fn default_phrase_pool(size: usize) -> Vec<String> {
    assert!(size <= 100, "code token is two digits");
    (0..size)
        .map(|i| {
            format!(
                "{} {} m{:02}",
                MARKER_ADJECTIVES[i % MARKER_ADJECTIVES.len()],
                MARKER_NOUNS[(i / MARKER_ADJECTIVES.len()) % MARKER_NOUNS.len()],
                i
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "shape")]
pub enum Shape {
    /// 52 units of 200 words ("Week {i}").
    Temporal,
    /// 100 units of 150 words ("Floor {i}").
    Spatial,
    Custom {
        units: usize,
        target_length: usize,
    },
}

impl Shape {
    fn dimensions(&self) -> (usize, usize, &'static str, &'static str, &'static str) {
        match self {
            Shape::Temporal => (
                52,
                200,
                "Week {i}",
                "A reflective weekly diary covering one year of the narrator's life.",
                "temporal",
            ),
            Shape::Spatial => (
                100,
                150,
                "Floor {i}",
                "A floor-by-floor design brief for a hundred-story mixed-use tower.",
                "spatial",
            ),
            Shape::Custom { units, target_length } => {
                let _ = (units, target_length);
                (
                    *units,
                    *target_length,
                    "Unit {i}",
                    "A structured document describing a sequence of numbered sections.",
                    "custom",
                )
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenProfile {
    pub shape: Shape,
    pub singles: usize,
    pub ranges: usize,
    pub periodics: usize,
    pub phrase_pool: Vec<String>,
    pub seed: u64,
}

impl GenProfile {
    pub fn new(shape: Shape, seed: u64) -> Self {
        Self {
            shape,
            singles: 3,
            ranges: 2,
            periodics: 2,
            phrase_pool: default_phrase_pool(40),
            seed,
        }
    }
}

#[derive(Debug, Error)]
pub enum TaskgenError {
    #[error("infeasible profile: {0}")]
    Infeasible(String),
    #[error(transparent)]
    InvalidSpec(#[from] InvalidTask),
}

fn check_pool(pool: &[String]) -> Result<(), TaskgenError> {
    for (i, a) in pool.iter().enumerate() {
        for (j, b) in pool.iter().enumerate() {
            if i != j && b.contains(a.as_str()) {
                return Err(TaskgenError::Infeasible(format!(
                    "phrase {a:?} is a substring of {b:?}"
                )));
            }
        }
    }
    Ok(())
}

/// Build a valid task from a profile; deterministic in the seed.
pub fn make_task(profile: &GenProfile) -> Result<TaskSpec, TaskgenError> {
    let (n, target_length, label_template, scenario, tag) = profile.shape.dimensions();
    if n < 1 || target_length < 1 {
        return Err(TaskgenError::Infeasible(format!(
            "shape needs positive dimensions, got {n} x {target_length}"
        )));
    }
    check_pool(&profile.phrase_pool)?;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);

    // Range lengths first, so the phrase budget is known up front.
    let range_lens: Vec<usize> = (0..profile.ranges)
        .map(|_| rng.random_range(1..=4.min(n)))
        .collect();
    let needed = profile.singles + range_lens.iter().sum::<usize>() + profile.periodics;
    if needed > profile.phrase_pool.len() {
        return Err(TaskgenError::Infeasible(format!(
            "need {needed} phrases, pool has {}",
            profile.phrase_pool.len()
        )));
    }
    let mut next_phrase = profile.phrase_pool.iter();
    let mut item_counter = 0usize;
    let mut item = |phrase: &String| {
        let it = ContentItem {
            item_id: format!("item{item_counter:02}"),
            phrase: phrase.clone(),
            match_mode: MatchMode::Substring,
        };
        item_counter += 1;
        it
    };

    let mut instructions = Vec::new();
    for _ in 0..profile.singles {
        instructions.push(Instruction::Single {
            position: rng.random_range(1..=n),
            content: item(next_phrase.next().expect("budgeted")),
        });
    }
    for len in range_lens {
        let start = rng.random_range(1..=n - len + 1);
        instructions.push(Instruction::Range {
            start,
            end: start + len - 1,
            contents: (0..len)
                .map(|_| item(next_phrase.next().expect("budgeted")))
                .collect(),
        });
    }
    for _ in 0..profile.periodics {
        let interval = if n >= 4 {
            rng.random_range(2..=(n / 2).max(2))
        } else {
            rng.random_range(1..=n)
        };
        let repetitions = rng.random_range(1..=n / interval);
        instructions.push(Instruction::Periodic {
            interval,
            repetitions,
            content: item(next_phrase.next().expect("budgeted")),
        });
    }

    let spec = TaskSpec {
        schema: TASKSPEC_SCHEMA.to_string(),
        task_id: format!("{tag}-{}", profile.seed),
        scenario: scenario.to_string(),
        unit_count: n,
        unit_label_template: label_template.to_string(),
        target_length,
        min_total_words: None,
        instructions,
    };
    let violations = validate_task(&spec);
    if !violations.is_empty() {
        return Err(TaskgenError::Infeasible(format!(
            "generated spec fails validation: {violations:?}"
        )));
    }
    Ok(spec)
}

// ---------------------------------------------------------------------------
// Reference documents
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default)]
pub struct DefectRates {
    /// Chance a unit's whole section is omitted.
    pub omit_unit: f64,
    /// Chance a required phrase is not planted.
    pub omit_phrase: f64,
    /// Chance a present unit is written at a third of the target length.
    pub short_unit: f64,
}

impl DefectRates {
    fn validate(&self) -> Result<(), TaskgenError> {
        for (name, v) in [
            ("omit_unit", self.omit_unit),
            ("omit_phrase", self.omit_phrase),
            ("short_unit", self.short_unit),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(TaskgenError::Infeasible(format!(
                    "{name} rate {v} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Build a document with known defects and the exactly computable report it
/// must score. The expected report is constructed arithmetically from the
/// injection decisions, not by running the evaluator.
pub fn make_reference_document(
    spec: &TaskSpec,
    rates: &DefectRates,
    seed: u64,
) -> Result<(String, EvalReport), TaskgenError> {
    rates.validate()?;
    let check = expand_check_set(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.unit_count;
    let target = spec.target_length;

    let mut doc = String::new();
    let mut per_unit_words = vec![0usize; n];
    let mut present_units = 0usize;
    let mut verdicts: Vec<Verdict> = Vec::new();
    let mut total_words = 0usize;

    for unit in 1..=n {
        // Fixed draw order per unit keeps (seed, rates) -> document stable.
        let omit = rng.random_bool(rates.omit_unit);
        let short = rng.random_bool(rates.short_unit);
        let planted: Vec<bool> = check
            .entries_for(unit)
            .iter()
            .map(|_| !rng.random_bool(rates.omit_phrase))
            .collect();

        if omit {
            for entry in check.entries_for(unit) {
                verdicts.push(Verdict {
                    instruction: entry.instruction,
                    unit,
                    satisfied: false,
                    matched_span: None,
                });
            }
            continue;
        }

        let mut tokens: Vec<String> = Vec::new();
        for (entry, &plant) in check.entries_for(unit).iter().zip(&planted) {
            verdicts.push(Verdict {
                instruction: entry.instruction,
                unit,
                satisfied: plant,
                matched_span: None,
            });
            if plant {
                tokens.extend(entry.item.phrase.split_whitespace().map(str::to_string));
                if let Some(last) = tokens.last_mut() {
                    last.push('.');
                }
            }
        }
        let budget = if short { (target / 3).max(1) } else { target };
        let mut k = 0;
        while tokens.len() < budget {
            tokens.push(REF_FILLER[(unit + k) % REF_FILLER.len()].to_string());
            k += 1;
        }
        let words = tokens.len();
        per_unit_words[unit - 1] = words;
        total_words += words;
        present_units += 1;
        doc.push_str(&format!(
            "## {}\n{}\n\n",
            spec.unit_label(unit),
            tokens.join(" ")
        ));
    }

    // Verdicts above follow unit order; the evaluator emits check-set order
    // (unit-ascending as well), so the sequences align.
    let kind_acc = |kind| {
        let total = check.count_for_kind(kind);
        if total == 0 {
            return None;
        }
        let sat = verdicts
            .iter()
            .filter(|v| v.instruction.kind == kind && v.satisfied)
            .count();
        Some(sat as f64 / total as f64)
    };
    use crate::constraint::InstructionKind;
    let acc_once = kind_acc(InstructionKind::Single);
    let acc_range = kind_acc(InstructionKind::Range);
    let acc_periodic = kind_acc(InstructionKind::Periodic);
    let present_accs: Vec<f64> = [acc_once, acc_range, acc_periodic]
        .into_iter()
        .flatten()
        .collect();
    let avg_acc = if present_accs.is_empty() {
        None
    } else {
        Some(present_accs.iter().sum::<f64>() / present_accs.len() as f64)
    };
    let mut match_modes: Vec<MatchMode> = check.iter().map(|(_, e)| e.item.match_mode).collect();
    match_modes.sort();
    match_modes.dedup();
    let word_floor = spec.effective_min_total_words();

    let expected = EvalReport {
        schema: EVALREPORT_SCHEMA.to_string(),
        task_id: spec.task_id.clone(),
        completion_rate: present_units as f64 / n as f64,
        acc_once,
        acc_range,
        acc_periodic,
        avg_acc,
        total_words,
        word_floor,
        meets_word_floor: total_words >= word_floor,
        per_unit_words,
        settings: EvalSettings {
            completion_rule: CompletionRule::PerUnit,
            match_modes,
        },
        verdicts,
    };
    Ok((doc, expected))
}

/// Compare a report against a constructively built expectation, ignoring
/// matched spans (the expectation never computes them).
pub fn reports_match(expected: &EvalReport, actual: &EvalReport) -> bool {
    let strip = |r: &EvalReport| {
        let mut r = r.clone();
        for v in &mut r.verdicts {
            v.matched_span = None;
        }
        r
    };
    strip(expected) == strip(actual)
}

// ---------------------------------------------------------------------------
// Backend scripts
// ---------------------------------------------------------------------------

/// A plan covering every requirement, one line per unit.
pub fn perfect_plan(spec: &TaskSpec) -> Result<Plan, InvalidTask> {
    let check = expand_check_set(spec)?;
    let units = (1..=spec.unit_count)
        .map(|i| {
            let label = spec.unit_label(i);
            let mut directives = vec![format!("outline {label}")];
            directives.extend(
                check
                    .entries_for(i)
                    .iter()
                    .map(|e| format!("mention {}", e.item.phrase)),
            );
            UnitPlan {
                index: i,
                label,
                directives,
            }
        })
        .collect();
    Ok(Plan {
        task_id: spec.task_id.clone(),
        units,
        revision_count: 0,
    })
}

fn resize_rule() -> ScriptRule {
    ScriptRule {
        template: Some("p_length".into()),
        action: ScriptAction {
            mode: Some(ActionMode::ResizeText),
            ..Default::default()
        },
        ..Default::default()
    }
}

fn adjust_rule() -> ScriptRule {
    ScriptRule {
        template: Some("p_adjust".into()),
        action: ScriptAction {
            mode: Some(ActionMode::CoverDeficiencies),
            ..Default::default()
        },
        ..Default::default()
    }
}

fn plan_rule(template: &str, plan: &Plan) -> ScriptRule {
    ScriptRule {
        template: Some(template.into()),
        action: ScriptAction {
            respond: Some(render_plan(plan)),
            ..Default::default()
        },
        ..Default::default()
    }
}

/// A script for an obedient model: covering plan, on-plan writer at exactly
/// the target length, exact length editor.
pub fn make_perfect_script(spec: &TaskSpec) -> Result<Script, InvalidTask> {
    let plan = perfect_plan(spec)?;
    Ok(Script {
        rules: vec![
            plan_rule("p_plan", &plan),
            plan_rule("p_revise", &plan),
            adjust_rule(),
            ScriptRule {
                template: Some("p_write".into()),
                action: ScriptAction {
                    mode: Some(ActionMode::WriteFromPlan),
                    words: Some(spec.target_length),
                    ..Default::default()
                },
                ..Default::default()
            },
            resize_rule(),
        ],
        ..Default::default()
    })
}

#[derive(Debug, Clone, Copy)]
pub struct FaultProfile {
    /// Chance each requirement is missing from the initial plan.
    pub plan_phrase_omission: f64,
    /// Chance a plan revision restores an omitted requirement. At least one
    /// omission always survives revision, so fixing it takes the per-unit
    /// adjust step.
    pub revise_restore: f64,
    /// Chance a unit is written at a third of the target length.
    pub short_unit: f64,
    pub seed: u64,
}

impl Default for FaultProfile {
    fn default() -> Self {
        Self {
            plan_phrase_omission: 0.3,
            revise_restore: 0.6,
            short_unit: 0.4,
            seed: 0,
        }
    }
}

/// A script for a flawed but improvable model: the initial plan omits
/// phrases, revision restores only some of them, the writer follows
/// whatever plan it is given (writing some units short), and the length
/// editor is exact. Each review mechanism in the pipeline has faults only
/// it can repair, and at least one fault of each kind is always injected.
pub fn make_fault_script(spec: &TaskSpec, faults: &FaultProfile) -> Result<Script, InvalidTask> {
    let check = expand_check_set(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(faults.seed);
    let n = spec.unit_count;

    let entries: Vec<(usize, String)> = check
        .iter()
        .map(|(unit, e)| (unit, e.item.phrase.clone()))
        .collect();
    let mut omitted: Vec<bool> = entries
        .iter()
        .map(|_| rng.random_bool(faults.plan_phrase_omission))
        .collect();
    if !omitted.is_empty() && !omitted.iter().any(|&o| o) {
        omitted[0] = true;
    }
    let mut restored: Vec<bool> = omitted
        .iter()
        .map(|&o| o && rng.random_bool(faults.revise_restore))
        .collect();
    if let Some(first_omitted) = omitted.iter().position(|&o| o) {
        if omitted
            .iter()
            .zip(&restored)
            .all(|(&o, &r)| !o || r)
        {
            restored[first_omitted] = false;
        }
    }
    let mut short: Vec<bool> = (0..n).map(|_| rng.random_bool(faults.short_unit)).collect();
    if n >= 2 {
        if !short.iter().any(|&s| s) {
            short[n - 1] = true;
        }
        if short.iter().all(|&s| s) {
            short[0] = false;
        }
    }

    let plan_with = |keep: &dyn Fn(usize) -> bool| -> Plan {
        let units = (1..=n)
            .map(|i| {
                let label = spec.unit_label(i);
                let mut directives = vec![format!("outline {label}")];
                for (k, (unit, phrase)) in entries.iter().enumerate() {
                    if *unit == i && keep(k) {
                        directives.push(format!("mention {phrase}"));
                    }
                }
                UnitPlan {
                    index: i,
                    label,
                    directives,
                }
            })
            .collect();
        Plan {
            task_id: spec.task_id.clone(),
            units,
            revision_count: 0,
        }
    };
    let initial = plan_with(&|k| !omitted[k]);
    let revised = plan_with(&|k| !omitted[k] || restored[k]);

    let mut rules = vec![
        plan_rule("p_plan", &initial),
        plan_rule("p_revise", &revised),
        adjust_rule(),
    ];
    for (i, &is_short) in short.iter().enumerate() {
        let words = if is_short {
            (spec.target_length / 3).max(1)
        } else {
            spec.target_length
        };
        rules.push(ScriptRule {
            template: Some("p_write".into()),
            unit: Some(i + 1),
            action: ScriptAction {
                mode: Some(ActionMode::WriteFromPlan),
                words: Some(words),
                ..Default::default()
            },
            ..Default::default()
        });
    }
    rules.push(resize_rule());
    Ok(Script {
        rules,
        ..Default::default()
    })
}
