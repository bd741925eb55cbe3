//! Task model: constrained-writing tasks, their instruction types, and the
//! per-unit check set that every monitor in the pipeline runs against.
//!
//! Unit indices are 1-based everywhere ("the 20th floor" is unit 20); ranges
//! are inclusive on both ends.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval;

/// Schema tag written into serialized task files.
pub const TASKSPEC_SCHEMA: &str = "taskspec/1";

/// Percentage of `unit_count * target_length` used as the document word
/// floor when `min_total_words` is not set explicitly.
pub const COMPLETENESS_FACTOR_PCT: usize = 95;

/// An explicit `min_total_words` may not exceed this multiple of
/// `unit_count * target_length`.
const PER_UNIT_WORD_CAP_FACTOR: usize = 2;

/// How a required phrase is matched against unit text (both sides are
/// normalized first; see [`eval::normalize`]).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// The whole phrase must occur as a contiguous substring.
    #[default]
    Substring,
    /// Every whitespace-separated token of the phrase must occur somewhere
    /// in the text (each as a substring, so the check stays monotone under
    /// appends).
    AllKeywords,
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatchMode::Substring => write!(f, "substring"),
            MatchMode::AllKeywords => write!(f, "all_keywords"),
        }
    }
}

/// One required piece of content.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentItem {
    pub item_id: String,
    pub phrase: String,
    #[serde(default)]
    pub match_mode: MatchMode,
}

impl ContentItem {
    pub fn new(item_id: impl Into<String>, phrase: impl Into<String>) -> Self {
        Self {
            item_id: item_id.into(),
            phrase: phrase.into(),
            match_mode: MatchMode::Substring,
        }
    }
}

/// The three instruction types a task can carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Instruction {
    /// Content pinned to one exact unit.
    Single { position: usize, content: ContentItem },
    /// An ordered list of contents assigned to a contiguous, inclusive unit
    /// range; `contents[k]` goes to unit `start + k`.
    Range {
        start: usize,
        end: usize,
        contents: Vec<ContentItem>,
    },
    /// The same content repeated every `interval` units, `repetitions`
    /// times: units `interval, 2*interval, ..., repetitions*interval`.
    Periodic {
        interval: usize,
        repetitions: usize,
        content: ContentItem,
    },
}

impl Instruction {
    pub fn kind(&self) -> InstructionKind {
        match self {
            Instruction::Single { .. } => InstructionKind::Single,
            Instruction::Range { .. } => InstructionKind::Range,
            Instruction::Periodic { .. } => InstructionKind::Periodic,
        }
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum InstructionKind {
    Single,
    Range,
    Periodic,
}

impl fmt::Display for InstructionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstructionKind::Single => write!(f, "single"),
            InstructionKind::Range => write!(f, "range"),
            InstructionKind::Periodic => write!(f, "periodic"),
        }
    }
}

/// A constrained long-form writing task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    #[serde(default = "default_schema")]
    pub schema: String,
    pub task_id: String,
    /// Free-text description fed to prompts.
    pub scenario: String,
    pub unit_count: usize,
    /// Pattern producing unit labels, e.g. `"Week {i}"`.
    pub unit_label_template: String,
    /// Per-unit word target.
    pub target_length: usize,
    /// Document-level word floor. When unset, derived as
    /// `unit_count * target_length * 95%`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_total_words: Option<usize>,
    pub instructions: Vec<Instruction>,
}

fn default_schema() -> String {
    TASKSPEC_SCHEMA.to_string()
}

impl TaskSpec {
    /// The display label for a unit, from `unit_label_template`.
    pub fn unit_label(&self, index: usize) -> String {
        self.unit_label_template.replace("{i}", &index.to_string())
    }

    /// The effective document word floor.
    pub fn effective_min_total_words(&self) -> usize {
        self.min_total_words.unwrap_or(
            self.unit_count * self.target_length * COMPLETENESS_FACTOR_PCT / 100,
        )
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("task spec serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, TaskSpecFormatError> {
        let spec: TaskSpec = serde_json::from_str(text)?;
        if spec.schema != TASKSPEC_SCHEMA {
            return Err(TaskSpecFormatError::Schema { found: spec.schema });
        }
        Ok(spec)
    }
}

#[derive(Debug, Error)]
pub enum TaskSpecFormatError {
    #[error("task file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported task schema {found:?} (expected {TASKSPEC_SCHEMA:?})")]
    Schema { found: String },
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    UnitCountInvalid,
    TargetLengthInvalid,
    IndexOutOfRange,
    RangeReversed,
    RangeContentsMismatch,
    PeriodicIntervalZero,
    PeriodicRepetitionsZero,
    PeriodicOverflow,
    EmptyPhrase,
    MinTotalWordsExceedsCap,
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationCode::UnitCountInvalid => "unit_count_invalid",
            ViolationCode::TargetLengthInvalid => "target_length_invalid",
            ViolationCode::IndexOutOfRange => "index_out_of_range",
            ViolationCode::RangeReversed => "range_reversed",
            ViolationCode::RangeContentsMismatch => "range_contents_mismatch",
            ViolationCode::PeriodicIntervalZero => "periodic_interval_zero",
            ViolationCode::PeriodicRepetitionsZero => "periodic_repetitions_zero",
            ViolationCode::PeriodicOverflow => "periodic_overflow",
            ViolationCode::EmptyPhrase => "empty_phrase",
            ViolationCode::MinTotalWordsExceedsCap => "min_total_words_exceeds_cap",
        };
        f.write_str(s)
    }
}

/// One failed invariant. Violations are data, not errors: `validate_task`
/// reports all of them instead of stopping at the first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub code: ViolationCode,
    /// Index of the offending instruction in `TaskSpec::instructions`,
    /// when one is responsible.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instruction: Option<usize>,
    pub detail: String,
}

fn violation(code: ViolationCode, instruction: Option<usize>, detail: String) -> Violation {
    Violation {
        code,
        instruction,
        detail,
    }
}

/// Check every task invariant; an empty result means the spec is valid.
pub fn validate_task(spec: &TaskSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    if spec.unit_count < 1 {
        out.push(violation(
            ViolationCode::UnitCountInvalid,
            None,
            format!("unit_count must be >= 1, got {}", spec.unit_count),
        ));
    }
    if spec.target_length < 1 {
        out.push(violation(
            ViolationCode::TargetLengthInvalid,
            None,
            format!("target_length must be >= 1, got {}", spec.target_length),
        ));
    }
    if let Some(floor) = spec.min_total_words {
        let cap = spec.unit_count * spec.target_length * PER_UNIT_WORD_CAP_FACTOR;
        if floor > cap {
            out.push(violation(
                ViolationCode::MinTotalWordsExceedsCap,
                None,
                format!("min_total_words {floor} exceeds cap {cap}"),
            ));
        }
    }
    let n = spec.unit_count;
    let in_range = |i: usize| (1..=n).contains(&i);
    let check_item = |idx: usize, item: &ContentItem, out: &mut Vec<Violation>| {
        if item.phrase.trim().is_empty() {
            out.push(violation(
                ViolationCode::EmptyPhrase,
                Some(idx),
                format!("content item {:?} has a blank phrase", item.item_id),
            ));
        }
    };
    for (idx, ins) in spec.instructions.iter().enumerate() {
        match ins {
            Instruction::Single { position, content } => {
                if !in_range(*position) {
                    out.push(violation(
                        ViolationCode::IndexOutOfRange,
                        Some(idx),
                        format!("single position {position} outside 1..={n}"),
                    ));
                }
                check_item(idx, content, &mut out);
            }
            Instruction::Range {
                start,
                end,
                contents,
            } => {
                if !in_range(*start) || !in_range(*end) {
                    out.push(violation(
                        ViolationCode::IndexOutOfRange,
                        Some(idx),
                        format!("range {start}..={end} outside 1..={n}"),
                    ));
                }
                if start > end {
                    out.push(violation(
                        ViolationCode::RangeReversed,
                        Some(idx),
                        format!("range start {start} > end {end}"),
                    ));
                } else if contents.len() != end - start + 1 {
                    out.push(violation(
                        ViolationCode::RangeContentsMismatch,
                        Some(idx),
                        format!(
                            "range {start}..={end} needs {} contents, got {}",
                            end - start + 1,
                            contents.len()
                        ),
                    ));
                }
                for item in contents {
                    check_item(idx, item, &mut out);
                }
            }
            Instruction::Periodic {
                interval,
                repetitions,
                content,
            } => {
                if *interval == 0 {
                    out.push(violation(
                        ViolationCode::PeriodicIntervalZero,
                        Some(idx),
                        "periodic interval must be >= 1".to_string(),
                    ));
                }
                if *repetitions == 0 {
                    out.push(violation(
                        ViolationCode::PeriodicRepetitionsZero,
                        Some(idx),
                        "periodic repetitions must be >= 1".to_string(),
                    ));
                }
                if *interval > 0 && interval * repetitions > n {
                    out.push(violation(
                        ViolationCode::PeriodicOverflow,
                        Some(idx),
                        format!(
                            "periodic {repetitions} x {interval} reaches unit {} past {n}",
                            interval * repetitions
                        ),
                    ));
                }
                check_item(idx, content, &mut out);
            }
        }
    }
    out
}

/// Returned by operations whose precondition is a valid spec.
#[derive(Debug, Clone, Error)]
pub struct InvalidTask {
    pub violations: Vec<Violation>,
}

impl fmt::Display for InvalidTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid task spec: ")?;
        let mut first = true;
        for v in &self.violations {
            if !first {
                write!(f, "; ")?;
            }
            first = false;
            write!(f, "{}", v.code)?;
            if let Some(i) = v.instruction {
                write!(f, "(instruction {i})")?;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Check set
// ---------------------------------------------------------------------------

/// Points back at the instruction a check entry came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrRef {
    /// Position in `TaskSpec::instructions`.
    pub index: usize,
    pub kind: InstructionKind,
}

/// One expanded requirement: this item must appear in this entry's unit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckEntry {
    pub instruction: InstrRef,
    pub item: ContentItem,
}

/// All instructions expanded into per-unit requirements. Within a unit,
/// entries are ordered single, then range, then periodic, then by
/// declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckSet {
    entries: BTreeMap<usize, Vec<CheckEntry>>,
    total_requirements: usize,
    unit_count: usize,
}

impl CheckSet {
    pub fn entries_for(&self, unit: usize) -> &[CheckEntry] {
        self.entries.get(&unit).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn total_requirements(&self) -> usize {
        self.total_requirements
    }

    pub fn unit_count(&self) -> usize {
        self.unit_count
    }

    /// Units that carry at least one requirement, ascending.
    pub fn units(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.keys().copied()
    }

    /// Every (unit, entry) pair, unit-ascending, entry order within a unit.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &CheckEntry)> + '_ {
        self.entries
            .iter()
            .flat_map(|(unit, list)| list.iter().map(move |e| (*unit, e)))
    }

    pub fn count_for_kind(&self, kind: InstructionKind) -> usize {
        self.iter().filter(|(_, e)| e.instruction.kind == kind).count()
    }
}

/// Expand a valid spec into its check set.
pub fn expand_check_set(spec: &TaskSpec) -> Result<CheckSet, InvalidTask> {
    let violations = validate_task(spec);
    if !violations.is_empty() {
        return Err(InvalidTask { violations });
    }
    let mut entries: BTreeMap<usize, Vec<CheckEntry>> = BTreeMap::new();
    let mut total = 0usize;
    let mut push = |unit: usize, index: usize, kind: InstructionKind, item: &ContentItem| {
        entries.entry(unit).or_default().push(CheckEntry {
            instruction: InstrRef { index, kind },
            item: item.clone(),
        });
        total += 1;
    };
    // One pass per kind keeps the per-unit ordering contract without a sort.
    for (index, ins) in spec.instructions.iter().enumerate() {
        if let Instruction::Single { position, content } = ins {
            push(*position, index, InstructionKind::Single, content);
        }
    }
    for (index, ins) in spec.instructions.iter().enumerate() {
        if let Instruction::Range {
            start, contents, ..
        } = ins
        {
            for (k, item) in contents.iter().enumerate() {
                push(start + k, index, InstructionKind::Range, item);
            }
        }
    }
    for (index, ins) in spec.instructions.iter().enumerate() {
        if let Instruction::Periodic {
            interval,
            repetitions,
            content,
        } = ins
        {
            for j in 1..=*repetitions {
                push(j * interval, index, InstructionKind::Periodic, content);
            }
        }
    }
    Ok(CheckSet {
        entries,
        total_requirements: total,
        unit_count: spec.unit_count,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("unit index {index} out of range 1..={unit_count}")]
pub struct UnitOutOfRange {
    pub index: usize,
    pub unit_count: usize,
}

/// The entries of `unit` that `text` does not satisfy. Text is normalized
/// internally, so callers may pass raw or normalized text.
pub fn residual_for_unit(
    check: &CheckSet,
    unit: usize,
    text: &str,
) -> Result<Vec<CheckEntry>, UnitOutOfRange> {
    if unit < 1 || unit > check.unit_count {
        return Err(UnitOutOfRange {
            index: unit,
            unit_count: check.unit_count,
        });
    }
    let normalized = eval::normalize(text);
    Ok(check
        .entries_for(unit)
        .iter()
        .filter(|e| !eval::check_phrase(&e.item, &normalized).satisfied)
        .cloned()
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn item(id: &str, phrase: &str) -> ContentItem {
        ContentItem::new(id, phrase)
    }

    fn base_spec(n: usize, instructions: Vec<Instruction>) -> TaskSpec {
        TaskSpec {
            schema: TASKSPEC_SCHEMA.to_string(),
            task_id: "t".into(),
            scenario: "test scenario".into(),
            unit_count: n,
            unit_label_template: "Unit {i}".into(),
            target_length: 100,
            min_total_words: None,
            instructions,
        }
    }

    #[test]
    fn range_over_floors_5_to_12_is_valid() {
        let contents = (5..=12).map(|i| item(&format!("c{i}"), &format!("office zone {i}"))).collect();
        let spec = base_spec(
            100,
            vec![Instruction::Range {
                start: 5,
                end: 12,
                contents,
            }],
        );
        assert!(validate_task(&spec).is_empty());
    }

    #[test]
    fn single_position_zero_is_out_of_range() {
        let spec = base_spec(
            10,
            vec![Instruction::Single {
                position: 0,
                content: item("a", "x"),
            }],
        );
        let v = validate_task(&spec);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].code, ViolationCode::IndexOutOfRange);
        assert_eq!(v[0].instruction, Some(0));
    }

    #[test]
    fn periodic_overflow_is_reported() {
        let spec = base_spec(
            100,
            vec![Instruction::Periodic {
                interval: 5,
                repetitions: 30,
                content: item("p", "checkpoint"),
            }],
        );
        let v = validate_task(&spec);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].code, ViolationCode::PeriodicOverflow);
    }

    #[test]
    fn validation_reports_every_violation() {
        let spec = base_spec(
            10,
            vec![
                Instruction::Single {
                    position: 11,
                    content: item("a", "  "),
                },
                Instruction::Range {
                    start: 4,
                    end: 2,
                    contents: vec![],
                },
            ],
        );
        let codes: Vec<_> = validate_task(&spec).iter().map(|v| v.code).collect();
        assert!(codes.contains(&ViolationCode::IndexOutOfRange));
        assert!(codes.contains(&ViolationCode::EmptyPhrase));
        assert!(codes.contains(&ViolationCode::RangeReversed));
    }

    #[test]
    fn periodic_expands_to_interval_multiples() {
        let spec = base_spec(
            20,
            vec![Instruction::Periodic {
                interval: 5,
                repetitions: 3,
                content: item("p", "security checkpoint"),
            }],
        );
        let check = expand_check_set(&spec).unwrap();
        let units: Vec<usize> = check.units().collect();
        assert_eq!(units, vec![5, 10, 15]);
        assert_eq!(check.total_requirements(), 3);
    }

    #[test]
    fn single_lands_only_on_its_unit() {
        let spec = base_spec(
            100,
            vec![Instruction::Single {
                position: 20,
                content: item("s", "medical center"),
            }],
        );
        let check = expand_check_set(&spec).unwrap();
        assert_eq!(check.units().collect::<Vec<_>>(), vec![20]);
        assert_eq!(check.entries_for(20).len(), 1);
        assert!(check.entries_for(19).is_empty());
    }

    #[test]
    fn expansion_orders_single_range_periodic_within_a_unit() {
        let spec = base_spec(
            10,
            vec![
                Instruction::Periodic {
                    interval: 5,
                    repetitions: 1,
                    content: item("p", "ppp"),
                },
                Instruction::Range {
                    start: 5,
                    end: 5,
                    contents: vec![item("r", "rrr")],
                },
                Instruction::Single {
                    position: 5,
                    content: item("s", "sss"),
                },
            ],
        );
        let check = expand_check_set(&spec).unwrap();
        let kinds: Vec<_> = check
            .entries_for(5)
            .iter()
            .map(|e| e.instruction.kind)
            .collect();
        assert_eq!(
            kinds,
            vec![
                InstructionKind::Single,
                InstructionKind::Range,
                InstructionKind::Periodic
            ]
        );
    }

    #[test]
    fn expansion_rejects_invalid_specs() {
        let spec = base_spec(
            3,
            vec![Instruction::Single {
                position: 9,
                content: item("a", "x"),
            }],
        );
        assert!(expand_check_set(&spec).is_err());
    }

    #[test]
    fn residual_matching_is_case_insensitive() {
        let spec = base_spec(
            100,
            vec![Instruction::Single {
                position: 20,
                content: item("s", "medical center"),
            }],
        );
        let check = expand_check_set(&spec).unwrap();
        let r = residual_for_unit(&check, 20, "The Medical Center on this floor is busy.").unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn empty_text_satisfies_nothing() {
        let spec = base_spec(
            100,
            vec![Instruction::Single {
                position: 20,
                content: item("s", "medical center"),
            }],
        );
        let check = expand_check_set(&spec).unwrap();
        assert_eq!(residual_for_unit(&check, 20, "").unwrap().len(), 1);
    }

    #[test]
    fn residual_counts_each_missing_phrase() {
        let spec = base_spec(
            5,
            vec![
                Instruction::Single {
                    position: 3,
                    content: item("a", "alpha marker"),
                },
                Instruction::Single {
                    position: 3,
                    content: item("b", "beta marker"),
                },
                Instruction::Single {
                    position: 3,
                    content: item("c", "gamma marker"),
                },
            ],
        );
        let check = expand_check_set(&spec).unwrap();
        let text = "we saw the alpha marker and the beta marker today";
        let residual = residual_for_unit(&check, 3, text).unwrap();
        // Brute-force per-phrase check of the same text.
        let mut expected = Vec::new();
        for e in check.entries_for(3) {
            if !eval::normalize(text).contains(&eval::normalize(&e.item.phrase)) {
                expected.push(e.clone());
            }
        }
        assert_eq!(residual, expected);
        assert_eq!(residual.len(), 1);
        assert_eq!(residual[0].item.item_id, "c");
    }

    #[test]
    fn residual_rejects_out_of_range_units() {
        let spec = base_spec(3, vec![]);
        let check = expand_check_set(&spec).unwrap();
        assert!(residual_for_unit(&check, 0, "x").is_err());
        assert!(residual_for_unit(&check, 4, "x").is_err());
    }

    #[test]
    fn derived_min_total_words_uses_completeness_factor() {
        let spec = base_spec(52, vec![]);
        let spec = TaskSpec {
            target_length: 200,
            ..spec
        };
        assert_eq!(spec.effective_min_total_words(), 52 * 200 * 95 / 100);
        let explicit = TaskSpec {
            min_total_words: Some(12_700),
            ..spec
        };
        assert_eq!(explicit.effective_min_total_words(), 12_700);
    }

    #[test]
    fn explicit_word_floor_above_the_cap_is_rejected() {
        let mut spec = base_spec(10, vec![]);
        spec.min_total_words = Some(10 * 100 * 2); // exactly at the cap
        assert!(validate_task(&spec).is_empty());
        spec.min_total_words = Some(10 * 100 * 2 + 1);
        let v = validate_task(&spec);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].code, ViolationCode::MinTotalWordsExceedsCap);
    }

    #[test]
    fn expansion_is_deterministic_and_order_stable() {
        let spec = base_spec(
            12,
            vec![
                Instruction::Periodic {
                    interval: 3,
                    repetitions: 4,
                    content: item("p", "ppp qqq"),
                },
                Instruction::Single {
                    position: 6,
                    content: item("s", "sss ttt"),
                },
                Instruction::Range {
                    start: 5,
                    end: 7,
                    contents: vec![item("r1", "r one"), item("r2", "r two"), item("r3", "r three")],
                },
            ],
        );
        let a = expand_check_set(&spec).unwrap();
        let b = expand_check_set(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.iter().map(|(u, _)| u).collect::<Vec<_>>(),
            b.iter().map(|(u, _)| u).collect::<Vec<_>>()
        );
    }

    #[test]
    fn residual_is_a_monotone_subset_of_the_unit_entries() {
        use rand::{Rng, SeedableRng};
        let spec = base_spec(
            4,
            vec![
                Instruction::Single {
                    position: 2,
                    content: item("a", "amber kiln m01"),
                },
                Instruction::Single {
                    position: 2,
                    content: item("b", "teal harbor m02"),
                },
            ],
        );
        let check = expand_check_set(&spec).unwrap();
        let words = ["amber", "kiln", "m01", "teal", "harbor", "m02", "plain", "text"];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let pick = |rng: &mut rand_chacha::ChaCha8Rng, k: usize| {
                (0..k)
                    .map(|_| words[rng.random_range(0..words.len())])
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            let base_len = rng.random_range(0..8);
            let base = pick(&mut rng, base_len);
            let tail_len = rng.random_range(0..4);
            let extended = format!("{base} {}", pick(&mut rng, tail_len));
            let before = residual_for_unit(&check, 2, &base).unwrap();
            let after = residual_for_unit(&check, 2, &extended).unwrap();
            // Subset of the unit's entries, and appending never grows it.
            let entries = check.entries_for(2);
            assert!(before.iter().all(|e| entries.contains(e)));
            assert!(after.len() <= before.len());
            assert!(after.iter().all(|e| before.contains(e)));
        }
    }

    #[test]
    fn task_json_round_trips_with_schema() {
        let spec = base_spec(
            4,
            vec![Instruction::Single {
                position: 2,
                content: item("a", "x y"),
            }],
        );
        let json = spec.to_json();
        assert!(json.contains("\"taskspec/1\""));
        let back = TaskSpec::from_json(&json).unwrap();
        assert_eq!(back, spec);
        assert!(TaskSpec::from_json(&json.replace("taskspec/1", "taskspec/9")).is_err());
    }
}
