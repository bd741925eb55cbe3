//! The line-oriented plan format: canonical rendering, tolerant parsing of
//! model output, and deterministic repair.
//!
//! Canonical form (PLANSPEC v1, `\n` line endings, UTF-8):
//!
//! ```text
//! PLAN <task_id> UNITS <n>
//! #1 | <label> | <directive>; <directive>; ...
//! #2 | <label> | <directive>
//! ```
//!
//! Exactly one line per unit, indices 1..n in order. The parser also accepts
//! looser unit headers models tend to emit (`Unit 3:`, `3.`, `3 -`), strips
//! code fences, and records everything it cannot place as a defect instead
//! of failing — it never aborts on any input. Repair then fixes what can be
//! fixed mechanically (drop out-of-range units, dedupe, sort, fill empty
//! units with a placeholder directive) and escalates what it must not invent
//! (missing unit indices) back to the caller.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::Serialize;

/// Injected into units that parsed without any directive.
pub const EMPTY_UNIT_DIRECTIVE: &str = "cover the general scenario for this unit";

/// Per-unit slice of a plan: the unit's index, display label, and the
/// ordered list of planned directives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnitPlan {
    pub index: usize,
    pub label: String,
    pub directives: Vec<String>,
}

impl UnitPlan {
    /// The unit's directives as one searchable string.
    pub fn directive_text(&self) -> String {
        self.directives.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Plan {
    pub task_id: String,
    pub units: Vec<UnitPlan>,
    pub revision_count: usize,
}

impl Plan {
    pub fn unit(&self, index: usize) -> Option<&UnitPlan> {
        self.units.iter().find(|u| u.index == index)
    }

    /// True when indices are strictly increasing, cover exactly 1..=n, and
    /// every unit has at least one directive.
    pub fn satisfies_invariants(&self, unit_count: usize) -> bool {
        self.units.len() == unit_count
            && self
                .units
                .iter()
                .enumerate()
                .all(|(k, u)| u.index == k + 1 && !u.directives.is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    UnparseableLine,
    DuplicateIndex,
    IndexGap,
    OutOfOrder,
    EmptyUnit,
    MissingHeader,
    IndexOutOfRange,
}

impl fmt::Display for DefectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DefectKind::UnparseableLine => "unparseable_line",
            DefectKind::DuplicateIndex => "duplicate_index",
            DefectKind::IndexGap => "index_gap",
            DefectKind::OutOfOrder => "out_of_order",
            DefectKind::EmptyUnit => "empty_unit",
            DefectKind::MissingHeader => "missing_header",
            DefectKind::IndexOutOfRange => "index_out_of_range",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectLocation {
    /// 1-based line number in the raw text.
    Line(usize),
    /// Unit index.
    Unit(usize),
}

impl fmt::Display for DefectLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DefectLocation::Line(n) => write!(f, "line {n}"),
            DefectLocation::Unit(n) => write!(f, "unit {n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlanDefect {
    pub kind: DefectKind,
    pub location: DefectLocation,
    pub detail: String,
}

impl fmt::Display for PlanDefect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.kind, self.location, self.detail)
    }
}

fn defect(kind: DefectKind, location: DefectLocation, detail: impl Into<String>) -> PlanDefect {
    PlanDefect {
        kind,
        location,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

/// Make a field safe for the single-line format: the delimiters `|` and `;`
/// become `,`, embedded line breaks and tabs become spaces.
fn sanitize_field(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            '|' | ';' => ',',
            '\n' | '\r' | '\t' => ' ',
            other => other,
        })
        .collect::<String>()
        .trim()
        .to_string()
}

/// Emit the canonical PLANSPEC v1 text for a plan.
pub fn render_plan(plan: &Plan) -> String {
    let mut out = format!("PLAN {} UNITS {}\n", plan.task_id, plan.units.len());
    for unit in &plan.units {
        let directives = unit
            .directives
            .iter()
            .map(|d| sanitize_field(d))
            .collect::<Vec<_>>()
            .join("; ");
        out.push_str(&format!(
            "#{} | {} | {}\n",
            unit.index,
            sanitize_field(&unit.label),
            directives
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

static HEADER_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*PLAN\s+(\S+)\s+UNITS\s+(\d+)\s*$").unwrap());

static CANONICAL_UNIT_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*#\s*(\d+)\s*\|(.*)$").unwrap());

// Worded headers like "Unit 3:", "Week 12 -". The word list covers the label
// vocabularies models see in prompts; extend via `PlanParser::with_words`.
const DEFAULT_HEADER_WORDS: &[&str] = &[
    "unit", "week", "floor", "block", "section", "day", "entry", "month", "chapter", "part",
];

static NUMBERED_UNIT_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(\d+)\s*[.):\-–—]\s*(.*)$").unwrap());

/// Tolerant plan parser. The default recognizes the canonical form plus the
/// common loose variants; extra label words can be added per instance.
#[derive(Debug, Clone)]
pub struct PlanParser {
    worded_re: Regex,
}

impl Default for PlanParser {
    fn default() -> Self {
        Self::with_words(&[])
    }
}

impl PlanParser {
    /// A parser that also treats `extra` words as unit-header words.
    pub fn with_words(extra: &[&str]) -> Self {
        let mut words: Vec<String> = DEFAULT_HEADER_WORDS.iter().map(|w| w.to_string()).collect();
        words.extend(extra.iter().map(|w| regex::escape(w)));
        let pattern = format!(
            r"(?i)^\s*((?:{})\s+(\d+))\s*[:.)\-–—]?\s*(.*)$",
            words.join("|")
        );
        PlanParser {
            worded_re: Regex::new(&pattern).expect("header word pattern compiles"),
        }
    }

    fn parse_unit_line(&self, line: &str) -> Option<UnitPlan> {
        if let Some(c) = CANONICAL_UNIT_RE.captures(line) {
            let index: usize = c[1].parse().ok()?;
            let rest = &c[2];
            let (label, directives_text) = match rest.split_once('|') {
                Some((label, rest)) => (label.trim().to_string(), rest),
                None => (String::new(), rest),
            };
            return Some(UnitPlan {
                index,
                label,
                directives: split_directives(directives_text),
            });
        }
        if let Some(c) = self.worded_re.captures(line) {
            let index: usize = c[2].parse().ok()?;
            return Some(UnitPlan {
                index,
                label: c[1].trim().to_string(),
                directives: split_directives(&c[3]),
            });
        }
        if let Some(c) = NUMBERED_UNIT_RE.captures(line) {
            let index: usize = c[1].parse().ok()?;
            return Some(UnitPlan {
                index,
                label: String::new(),
                directives: split_directives(&c[2]),
            });
        }
        None
    }

    /// Best-effort parse of arbitrary model output. Never fails; every
    /// problem is reported as a [`PlanDefect`].
    pub fn parse(&self, text: &str, expected_units: usize) -> ParsedPlan {
        let mut defects = Vec::new();
        let mut units: Vec<UnitPlan> = Vec::new();
        let mut task_id = String::new();
        let mut saw_header = false;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with("```") {
                continue;
            }
            if !saw_header && units.is_empty() {
                if let Some(c) = HEADER_RE.captures(line) {
                    task_id = c[1].to_string();
                    saw_header = true;
                    continue;
                }
            }
            if let Some(unit) = self.parse_unit_line(line) {
                units.push(unit);
                continue;
            }
            // Free text: keep the content by folding it into the unit above,
            // but leave a defect so the caller can see the format slipped.
            match units.last_mut() {
                Some(last) => {
                    last.directives.push(line.to_string());
                    defects.push(defect(
                        DefectKind::UnparseableLine,
                        DefectLocation::Line(line_no),
                        format!("folded into unit {}", last.index),
                    ));
                }
                None => defects.push(defect(
                    DefectKind::UnparseableLine,
                    DefectLocation::Line(line_no),
                    format!("no unit to attach to: {}", snippet(line)),
                )),
            }
        }

        if !saw_header {
            defects.push(defect(
                DefectKind::MissingHeader,
                DefectLocation::Line(1),
                "no PLAN header line",
            ));
        }

        // Structural checks, in a fixed order so output is deterministic.
        let mut seen: BTreeSet<usize> = BTreeSet::new();
        let mut prev_in_range: Option<usize> = None;
        for unit in &units {
            if unit.index < 1 || unit.index > expected_units {
                defects.push(defect(
                    DefectKind::IndexOutOfRange,
                    DefectLocation::Unit(unit.index),
                    format!("expected 1..={expected_units}"),
                ));
                continue;
            }
            if !seen.insert(unit.index) {
                defects.push(defect(
                    DefectKind::DuplicateIndex,
                    DefectLocation::Unit(unit.index),
                    "unit declared more than once",
                ));
                continue;
            }
            if let Some(prev) = prev_in_range {
                if unit.index < prev {
                    defects.push(defect(
                        DefectKind::OutOfOrder,
                        DefectLocation::Unit(unit.index),
                        format!("appears after unit {prev}"),
                    ));
                }
            }
            prev_in_range = Some(unit.index);
        }
        for unit in &units {
            if unit.directives.is_empty() {
                defects.push(defect(
                    DefectKind::EmptyUnit,
                    DefectLocation::Unit(unit.index),
                    "unit has no directives",
                ));
            }
        }
        for missing in (1..=expected_units).filter(|i| !seen.contains(i)) {
            defects.push(defect(
                DefectKind::IndexGap,
                DefectLocation::Unit(missing),
                "no line for this unit",
            ));
        }

        ParsedPlan {
            plan: Plan {
                task_id,
                units,
                revision_count: 0,
            },
            defects,
            expected_units,
        }
    }
}

fn split_directives(text: &str) -> Vec<String> {
    text.split(';')
        .map(str::trim)
        .filter(|d| !d.is_empty())
        .map(str::to_string)
        .collect()
}

fn snippet(line: &str) -> String {
    let mut s: String = line.chars().take(40).collect();
    if s.len() < line.len() {
        s.push('…');
    }
    s
}

/// Output of [`parse_plan`]: the best-effort plan plus everything wrong
/// with it.
#[derive(Debug, Clone)]
pub struct ParsedPlan {
    pub plan: Plan,
    pub defects: Vec<PlanDefect>,
    pub expected_units: usize,
}

/// Parse arbitrary text with the default parser.
pub fn parse_plan(text: &str, expected_units: usize) -> ParsedPlan {
    PlanParser::default().parse(text, expected_units)
}

// ---------------------------------------------------------------------------
// Repair
// ---------------------------------------------------------------------------

/// Deterministic plan repair. Applies, in order: drop out-of-range units,
/// keep the first occurrence of duplicated indices, sort by index, inject
/// [`EMPTY_UNIT_DIRECTIVE`] into empty units. Index gaps are *not* filled —
/// they come back in the unrepaired list so the planning loop can ask the
/// model instead of inventing unit content here.
pub fn repair_plan(parsed: &ParsedPlan) -> (Plan, Vec<PlanDefect>) {
    let n = parsed.expected_units;
    let mut seen: BTreeSet<usize> = BTreeSet::new();
    let mut kept: Vec<UnitPlan> = Vec::new();
    for unit in &parsed.plan.units {
        if (1..=n).contains(&unit.index) && seen.insert(unit.index) {
            kept.push(unit.clone());
        }
    }
    kept.sort_by_key(|u| u.index);
    for unit in &mut kept {
        if unit.directives.is_empty() {
            unit.directives.push(EMPTY_UNIT_DIRECTIVE.to_string());
        }
    }
    let unrepaired: Vec<PlanDefect> = (1..=n)
        .filter(|i| !seen.contains(i))
        .map(|i| {
            defect(
                DefectKind::IndexGap,
                DefectLocation::Unit(i),
                "no line for this unit",
            )
        })
        .collect();
    (
        Plan {
            task_id: parsed.plan.task_id.clone(),
            units: kept,
            revision_count: parsed.plan.revision_count,
        },
        unrepaired,
    )
}
