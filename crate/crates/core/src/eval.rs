//! Deterministic checking and scoring: text normalization, phrase
//! satisfaction, word counting, document segmentation, and the metric suite
//! (completion rate, per-instruction-kind accuracies, word totals) with
//! table/CSV/JSON emission.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{
    expand_check_set, ContentItem, InstrRef, InstructionKind, InvalidTask, MatchMode, TaskSpec,
};

/// Schema tag written into structured report emissions.
pub const EVALREPORT_SCHEMA: &str = "evalreport/1";

/// Unicode-aware lowercase, whitespace runs collapsed to single spaces,
/// ends trimmed. Punctuation is kept.
pub fn normalize(text: &str) -> String {
    text.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Number of maximal non-whitespace runs.
pub fn count_words(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Result of matching one content item against normalized text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhraseMatch {
    pub satisfied: bool,
    /// Byte offset and length of the match in the normalized text.
    /// Present only for substring mode.
    pub span: Option<(usize, usize)>,
}

/// Match `item.phrase` against already-normalized text under the item's
/// match mode.
pub fn check_phrase(item: &ContentItem, normalized_text: &str) -> PhraseMatch {
    let phrase = normalize(&item.phrase);
    if phrase.is_empty() {
        return PhraseMatch {
            satisfied: false,
            span: None,
        };
    }
    match item.match_mode {
        MatchMode::Substring => match normalized_text.find(&phrase) {
            Some(offset) => PhraseMatch {
                satisfied: true,
                span: Some((offset, phrase.len())),
            },
            None => PhraseMatch {
                satisfied: false,
                span: None,
            },
        },
        MatchMode::AllKeywords => {
            let satisfied = phrase
                .split_whitespace()
                .all(|token| normalized_text.contains(token));
            PhraseMatch {
                satisfied,
                span: None,
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

/// A document split back into units, plus anything odd seen on the way.
#[derive(Debug, Clone, Default)]
pub struct Segmentation {
    pub units: BTreeMap<usize, String>,
    pub warnings: Vec<String>,
}

/// Split a document on `## <label>` headers, mapping labels back to unit
/// indices through the task's label template. Matching tolerates case,
/// extra whitespace, and trailing `:` or `.` on the header. Text before the
/// first recognized header is discarded (with a warning), as is any section
/// under an unrecognized or duplicated header.
pub fn segment_document(raw: &str, spec: &TaskSpec) -> Segmentation {
    let mut expected: BTreeMap<String, usize> = BTreeMap::new();
    for i in 1..=spec.unit_count {
        expected.insert(normalize(&spec.unit_label(i)), i);
    }

    enum Sink {
        Unit(usize, Vec<String>),
        Discard,
        Leading(usize), // count of non-blank leading lines
    }

    let mut seg = Segmentation::default();
    let mut sink = Sink::Leading(0);

    let flush = |sink: &mut Sink, seg: &mut Segmentation| {
        match std::mem::replace(sink, Sink::Discard) {
            Sink::Unit(index, lines) => {
                seg.units.insert(index, lines.join("\n").trim().to_string());
            }
            Sink::Leading(count) if count > 0 => {
                seg.warnings
                    .push(format!("discarded {count} line(s) before the first unit header"));
            }
            _ => {}
        }
    };

    for raw_line in raw.lines() {
        let line = raw_line.trim_end_matches('\r');
        if let Some(label_text) = line.strip_prefix("## ") {
            let key = normalize(label_text.trim().trim_end_matches([':', '.']));
            flush(&mut sink, &mut seg);
            match expected.get(&key) {
                Some(&index) if !seg.units.contains_key(&index) => {
                    sink = Sink::Unit(index, Vec::new());
                }
                Some(&index) => {
                    seg.warnings
                        .push(format!("duplicate header for unit {index}; keeping the first"));
                    sink = Sink::Discard;
                }
                None => {
                    seg.warnings
                        .push(format!("unmatched header {:?}", label_text.trim()));
                    sink = Sink::Discard;
                }
            }
        } else {
            match &mut sink {
                Sink::Unit(_, lines) => lines.push(line.to_string()),
                Sink::Leading(count) => {
                    if !line.trim().is_empty() {
                        *count += 1;
                    }
                }
                Sink::Discard => {}
            }
        }
    }
    flush(&mut sink, &mut seg);
    seg
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// How the completion rate counts units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionRule {
    /// Each present, non-empty unit counts independently.
    #[default]
    PerUnit,
    /// Only the longest fully-present prefix 1..k counts.
    StrictPrefix,
}

impl fmt::Display for CompletionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompletionRule::PerUnit => write!(f, "per_unit"),
            CompletionRule::StrictPrefix => write!(f, "strict_prefix"),
        }
    }
}

impl FromStr for CompletionRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "per_unit" | "per-unit" => Ok(CompletionRule::PerUnit),
            "strict_prefix" | "strict-prefix" => Ok(CompletionRule::StrictPrefix),
            other => Err(format!("unknown completion rule {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalOptions {
    pub completion_rule: CompletionRule,
}

/// Per-requirement outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub instruction: InstrRef,
    pub unit: usize,
    pub satisfied: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matched_span: Option<(usize, usize)>,
}

/// Which knobs produced a report; scoring semantics are not fully pinned by
/// the benchmark, so every report labels the rules it used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub completion_rule: CompletionRule,
    pub match_modes: Vec<MatchMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub task_id: String,
    pub completion_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc_once: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc_range: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc_periodic: Option<f64>,
    /// Mean of the accuracies present above.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub avg_acc: Option<f64>,
    pub total_words: usize,
    /// The floor `total_words` was compared against.
    pub word_floor: usize,
    pub meets_word_floor: bool,
    /// Word count per unit 1..=n; absent units count 0.
    pub per_unit_words: Vec<usize>,
    pub settings: EvalSettings,
    pub verdicts: Vec<Verdict>,
}

impl EvalReport {
    /// Satisfied / total for one instruction kind, from the verdicts.
    pub fn kind_counts(&self, kind: InstructionKind) -> (usize, usize) {
        let mut sat = 0;
        let mut tot = 0;
        for v in &self.verdicts {
            if v.instruction.kind == kind {
                tot += 1;
                if v.satisfied {
                    sat += 1;
                }
            }
        }
        (sat, tot)
    }
}

/// Score a segmented document against its task.
///
/// Pure: equal inputs yield identical reports. Entries in absent units are
/// counted as unsatisfied rather than excluded, so omitting hard units
/// cannot raise accuracy.
pub fn evaluate(
    units: &BTreeMap<usize, String>,
    spec: &TaskSpec,
    opts: &EvalOptions,
) -> Result<EvalReport, InvalidTask> {
    let check = expand_check_set(spec)?;
    let n = spec.unit_count;

    let normalized: BTreeMap<usize, String> = units
        .iter()
        .filter(|(i, _)| (1..=n).contains(*i))
        .map(|(i, t)| (*i, normalize(t)))
        .collect();
    let present = |i: usize| normalized.get(&i).map(|t| !t.is_empty()).unwrap_or(false);

    let present_count = match opts.completion_rule {
        CompletionRule::PerUnit => (1..=n).filter(|&i| present(i)).count(),
        CompletionRule::StrictPrefix => (1..=n).take_while(|&i| present(i)).count(),
    };
    let completion_rate = present_count as f64 / n as f64;

    let mut verdicts = Vec::with_capacity(check.total_requirements());
    for (unit, entry) in check.iter() {
        let (satisfied, matched_span) = if present(unit) {
            let m = check_phrase(&entry.item, &normalized[&unit]);
            (m.satisfied, m.span)
        } else {
            (false, None)
        };
        verdicts.push(Verdict {
            instruction: entry.instruction,
            unit,
            satisfied,
            matched_span,
        });
    }

    let accuracy = |kind: InstructionKind| -> Option<f64> {
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
    let acc_once = accuracy(InstructionKind::Single);
    let acc_range = accuracy(InstructionKind::Range);
    let acc_periodic = accuracy(InstructionKind::Periodic);
    let present_accs: Vec<f64> = [acc_once, acc_range, acc_periodic]
        .into_iter()
        .flatten()
        .collect();
    let avg_acc = if present_accs.is_empty() {
        None
    } else {
        Some(present_accs.iter().sum::<f64>() / present_accs.len() as f64)
    };

    let per_unit_words: Vec<usize> = (1..=n)
        .map(|i| {
            if present(i) {
                count_words(units.get(&i).map(String::as_str).unwrap_or(""))
            } else {
                0
            }
        })
        .collect();
    let total_words: usize = per_unit_words.iter().sum();
    let word_floor = spec.effective_min_total_words();

    let mut match_modes: Vec<MatchMode> = check.iter().map(|(_, e)| e.item.match_mode).collect();
    match_modes.sort();
    match_modes.dedup();

    Ok(EvalReport {
        schema: EVALREPORT_SCHEMA.to_string(),
        task_id: spec.task_id.clone(),
        completion_rate,
        acc_once,
        acc_range,
        acc_periodic,
        avg_acc,
        total_words,
        word_floor,
        meets_word_floor: total_words >= word_floor,
        per_unit_words,
        settings: EvalSettings {
            completion_rule: opts.completion_rule,
            match_modes,
        },
        verdicts,
    })
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
    Structured,
}

#[derive(Debug, Error)]
#[error("unknown report format {0:?} (expected table, csv, or structured)")]
pub struct UnknownFormat(pub String);

impl FromStr for ReportFormat {
    type Err = UnknownFormat;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            "structured" | "json" => Ok(ReportFormat::Structured),
            other => Err(UnknownFormat(other.to_string())),
        }
    }
}

fn fmt_acc(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.4}"),
        None => "n/a".to_string(),
    }
}

/// Render a report. `Table` is the human summary, `Csv` is one row per unit
/// (`unit,words,single_sat,single_tot,range_sat,range_tot,periodic_sat,periodic_tot`),
/// `Structured` is the versioned JSON form. Equal reports emit identical
/// bytes.
pub fn emit_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Table => {
            let modes = report
                .settings
                .match_modes
                .iter()
                .map(|m| m.to_string())
                .collect::<Vec<_>>()
                .join(",");
            let mut out = String::new();
            out.push_str(&format!("task_id            {}\n", report.task_id));
            out.push_str(&format!(
                "completion_rate    {:.4}\n",
                report.completion_rate
            ));
            out.push_str(&format!("acc_once           {}\n", fmt_acc(report.acc_once)));
            out.push_str(&format!("acc_range          {}\n", fmt_acc(report.acc_range)));
            out.push_str(&format!(
                "acc_periodic       {}\n",
                fmt_acc(report.acc_periodic)
            ));
            out.push_str(&format!("avg_acc            {}\n", fmt_acc(report.avg_acc)));
            out.push_str(&format!("total_words        {}\n", report.total_words));
            out.push_str(&format!("word_floor         {}\n", report.word_floor));
            out.push_str(&format!(
                "meets_word_floor   {}\n",
                report.meets_word_floor
            ));
            out.push_str(&format!(
                "units_present      {}/{}\n",
                report.per_unit_words.iter().filter(|&&w| w > 0).count(),
                report.per_unit_words.len()
            ));
            out.push_str(&format!(
                "completion_rule    {}\n",
                report.settings.completion_rule
            ));
            out.push_str(&format!("match_modes        {modes}\n"));
            out
        }
        ReportFormat::Csv => {
            let mut out = String::from(
                "unit,words,single_sat,single_tot,range_sat,range_tot,periodic_sat,periodic_tot\n",
            );
            for (idx, words) in report.per_unit_words.iter().enumerate() {
                let unit = idx + 1;
                let mut counts = [[0usize; 2]; 3];
                for v in report.verdicts.iter().filter(|v| v.unit == unit) {
                    let k = match v.instruction.kind {
                        InstructionKind::Single => 0,
                        InstructionKind::Range => 1,
                        InstructionKind::Periodic => 2,
                    };
                    counts[k][1] += 1;
                    if v.satisfied {
                        counts[k][0] += 1;
                    }
                }
                out.push_str(&format!(
                    "{unit},{words},{},{},{},{},{},{}\n",
                    counts[0][0],
                    counts[0][1],
                    counts[1][0],
                    counts[1][1],
                    counts[2][0],
                    counts[2][1],
                ));
            }
            out
        }
        ReportFormat::Structured => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraint::{Instruction, TASKSPEC_SCHEMA};

    fn item(id: &str, phrase: &str) -> ContentItem {
        ContentItem::new(id, phrase)
    }

    fn spec_with(n: usize, target: usize, instructions: Vec<Instruction>) -> TaskSpec {
        TaskSpec {
            schema: TASKSPEC_SCHEMA.to_string(),
            task_id: "eval-test".into(),
            scenario: "scenario".into(),
            unit_count: n,
            unit_label_template: "Week {i}".into(),
            target_length: target,
            min_total_words: None,
            instructions,
        }
    }

    #[test]
    fn normalize_collapses_whitespace_and_case() {
        assert_eq!(normalize("  Medical\n Center "), "medical center");
        assert_eq!(normalize(""), "");
    }

    #[test]
    fn count_words_counts_runs() {
        assert_eq!(count_words("The quick brown fox"), 4);
        assert_eq!(count_words(""), 0);
        assert_eq!(count_words("  \t \n"), 0);
    }

    #[test]
    fn all_keywords_mode_accepts_scattered_tokens() {
        let mut it = item("k", "medical center");
        it.match_mode = MatchMode::AllKeywords;
        let m = check_phrase(&it, "the center has a medical wing");
        assert!(m.satisfied);
        assert!(m.span.is_none());
        let m2 = check_phrase(&it, "the center has no clinic");
        assert!(!m2.satisfied);
    }

    #[test]
    fn substring_mode_reports_a_span() {
        let it = item("s", "Medical  Center");
        let text = normalize("visit the medical center today");
        let m = check_phrase(&it, &text);
        assert!(m.satisfied);
        let (off, len) = m.span.unwrap();
        assert_eq!(&text[off..off + len], "medical center");
    }

    #[test]
    fn segment_recovers_engine_layout() {
        let spec = spec_with(3, 10, vec![]);
        let raw = "## Week 1\nfirst entry text\n\n## Week 2\nsecond\nentry\n\n## Week 3\nthird\n\n";
        let seg = segment_document(raw, &spec);
        assert!(seg.warnings.is_empty());
        assert_eq!(seg.units.len(), 3);
        assert_eq!(seg.units[&1], "first entry text");
        assert_eq!(seg.units[&2], "second\nentry");
    }

    #[test]
    fn segment_tolerates_header_variants() {
        let spec = spec_with(2, 10, vec![]);
        let raw = "## week 1:\nalpha\n\n## WEEK 2.\nbeta\n";
        let seg = segment_document(raw, &spec);
        assert_eq!(seg.units[&1], "alpha");
        assert_eq!(seg.units[&2], "beta");
    }

    #[test]
    fn segment_reports_missing_units_and_leading_text() {
        let spec = spec_with(3, 10, vec![]);
        let raw = "preamble the model wrote\n## Week 1\na\n\n## Week 3\nc\n";
        let seg = segment_document(raw, &spec);
        assert_eq!(seg.units.keys().copied().collect::<Vec<_>>(), vec![1, 3]);
        assert!(seg.warnings.iter().any(|w| w.contains("before the first")));
    }

    #[test]
    fn segment_flags_unmatched_headers() {
        let spec = spec_with(1, 10, vec![]);
        let raw = "## Week 1\nok\n\n## Appendix\nnot a unit\n";
        let seg = segment_document(raw, &spec);
        assert_eq!(seg.units.len(), 1);
        assert!(seg.warnings.iter().any(|w| w.contains("Appendix")));
    }

    #[test]
    fn perfect_document_scores_ones() {
        let spec = spec_with(
            4,
            5,
            vec![
                Instruction::Single {
                    position: 2,
                    content: item("s", "green lantern"),
                },
                Instruction::Periodic {
                    interval: 2,
                    repetitions: 2,
                    content: item("p", "weekly audit"),
                },
            ],
        );
        let mut units = BTreeMap::new();
        units.insert(1, "calm start to the year here".to_string());
        units.insert(2, "we lit the green lantern weekly audit done".to_string());
        units.insert(3, "middle of the month passed".to_string());
        units.insert(4, "closing weekly audit complete now".to_string());
        let r = evaluate(&units, &spec, &EvalOptions::default()).unwrap();
        assert_eq!(r.completion_rate, 1.0);
        assert_eq!(r.acc_once, Some(1.0));
        assert_eq!(r.acc_range, None);
        assert_eq!(r.acc_periodic, Some(1.0));
        assert_eq!(r.avg_acc, Some(1.0));
        assert!(r.total_words >= 20);
    }

    #[test]
    fn three_of_four_singles_score_point_75() {
        let phrases = ["ruby gate", "onyx door", "lapis arch", "opal vault"];
        let instructions = phrases
            .iter()
            .enumerate()
            .map(|(k, p)| Instruction::Single {
                position: k + 1,
                content: item(&format!("s{k}"), p),
            })
            .collect();
        let spec = spec_with(4, 3, instructions);
        let mut units = BTreeMap::new();
        units.insert(1, "the ruby gate stands".to_string());
        units.insert(2, "the onyx door creaks".to_string());
        units.insert(3, "nothing special today".to_string());
        units.insert(4, "the opal vault gleams".to_string());
        let r = evaluate(&units, &spec, &EvalOptions::default()).unwrap();
        assert_eq!(r.acc_once, Some(0.75));
        assert_eq!(r.avg_acc, Some(0.75));
        assert_eq!(r.completion_rate, 1.0);
    }

    #[test]
    fn entries_in_absent_units_count_as_unsatisfied() {
        let spec = spec_with(
            2,
            3,
            vec![Instruction::Single {
                position: 2,
                content: item("s", "silver key"),
            }],
        );
        let mut units = BTreeMap::new();
        units.insert(1, "only the first unit exists".to_string());
        let r = evaluate(&units, &spec, &EvalOptions::default()).unwrap();
        assert_eq!(r.completion_rate, 0.5);
        assert_eq!(r.acc_once, Some(0.0));
    }

    #[test]
    fn strict_prefix_rule_stops_at_first_gap() {
        let spec = spec_with(4, 3, vec![]);
        let mut units = BTreeMap::new();
        units.insert(1, "a".to_string());
        units.insert(3, "c".to_string());
        units.insert(4, "d".to_string());
        let per_unit = evaluate(&units, &spec, &EvalOptions::default()).unwrap();
        assert_eq!(per_unit.completion_rate, 0.75);
        let strict = evaluate(
            &units,
            &spec,
            &EvalOptions {
                completion_rule: CompletionRule::StrictPrefix,
            },
        )
        .unwrap();
        assert_eq!(strict.completion_rate, 0.25);
    }

    #[test]
    fn word_floor_uses_explicit_override() {
        let mut spec = spec_with(52, 200, vec![]);
        spec.min_total_words = Some(12_700);
        let mut units = BTreeMap::new();
        let entry = (0..250).map(|k| format!("w{k}")).collect::<Vec<_>>().join(" ");
        for i in 1..=52 {
            units.insert(i, entry.clone());
        }
        let r = evaluate(&units, &spec, &EvalOptions::default()).unwrap();
        assert_eq!(r.total_words, 52 * 250);
        assert_eq!(r.word_floor, 12_700);
        assert!(r.meets_word_floor);
        // Below the floor: 52 * 240 = 12,480 < 12,700 even though each unit
        // beats the per-unit target.
        let short = (0..240).map(|k| format!("w{k}")).collect::<Vec<_>>().join(" ");
        for i in 1..=52 {
            units.insert(i, short.clone());
        }
        let r2 = evaluate(&units, &spec, &EvalOptions::default()).unwrap();
        assert!(!r2.meets_word_floor);
    }

    #[test]
    fn csv_has_header_plus_one_row_per_unit() {
        let spec = spec_with(3, 3, vec![]);
        let mut units = BTreeMap::new();
        units.insert(1, "a b".to_string());
        let r = evaluate(&units, &spec, &EvalOptions::default()).unwrap();
        let csv = emit_report(&r, ReportFormat::Csv);
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("unit,words,single_sat"));
        assert!(csv.contains("\n1,2,0,0,0,0,0,0\n"));
    }

    #[test]
    fn csv_columns_cross_foot_to_accuracy_numerators() {
        let spec = spec_with(
            5,
            3,
            vec![
                Instruction::Single {
                    position: 1,
                    content: item("a", "ruby gate"),
                },
                Instruction::Range {
                    start: 2,
                    end: 3,
                    contents: vec![item("b", "onyx door"), item("c", "lapis arch")],
                },
                Instruction::Periodic {
                    interval: 2,
                    repetitions: 2,
                    content: item("d", "opal vault"),
                },
            ],
        );
        let mut units = BTreeMap::new();
        units.insert(1, "ruby gate".to_string());
        units.insert(2, "onyx door opal vault".to_string());
        units.insert(3, "plain text".to_string());
        units.insert(4, "opal vault".to_string());
        units.insert(5, "end".to_string());
        let r = evaluate(&units, &spec, &EvalOptions::default()).unwrap();
        let csv = emit_report(&r, ReportFormat::Csv);
        let mut sums = [0usize; 6];
        for line in csv.lines().skip(1) {
            let cols: Vec<usize> = line.split(',').skip(2).map(|c| c.parse().unwrap()).collect();
            for (k, v) in cols.iter().enumerate() {
                sums[k] += v;
            }
        }
        let (s_sat, s_tot) = r.kind_counts(InstructionKind::Single);
        let (r_sat, r_tot) = r.kind_counts(InstructionKind::Range);
        let (p_sat, p_tot) = r.kind_counts(InstructionKind::Periodic);
        assert_eq!(sums, [s_sat, s_tot, r_sat, r_tot, p_sat, p_tot]);
        assert_eq!(r.acc_once, Some(1.0));
        assert_eq!(r.acc_range, Some(0.5));
        assert_eq!(r.acc_periodic, Some(1.0));
    }

    #[test]
    fn planting_a_required_phrase_never_lowers_accuracy() {
        let spec = spec_with(
            3,
            4,
            vec![
                Instruction::Single {
                    position: 1,
                    content: item("a", "ruby gate"),
                },
                Instruction::Single {
                    position: 2,
                    content: item("b", "onyx door"),
                },
                Instruction::Periodic {
                    interval: 3,
                    repetitions: 1,
                    content: item("c", "opal vault"),
                },
            ],
        );
        let mut units = BTreeMap::new();
        units.insert(1, "an uneventful opening".to_string());
        units.insert(2, "the onyx door shut".to_string());
        units.insert(3, "a closing note".to_string());
        let before = evaluate(&units, &spec, &EvalOptions::default()).unwrap();
        units.insert(3, format!("{} opal vault", units[&3]));
        let after = evaluate(&units, &spec, &EvalOptions::default()).unwrap();
        for (b, a) in [
            (before.acc_once, after.acc_once),
            (before.acc_range, after.acc_range),
            (before.acc_periodic, after.acc_periodic),
            (before.avg_acc, after.avg_acc),
        ] {
            assert!(a.unwrap_or(0.0) >= b.unwrap_or(0.0));
        }
    }

    #[test]
    fn completion_and_words_ignore_where_phrases_sit() {
        let spec = spec_with(
            2,
            4,
            vec![
                Instruction::Single {
                    position: 1,
                    content: item("a", "ruby gate"),
                },
                Instruction::Single {
                    position: 2,
                    content: item("b", "onyx door"),
                },
            ],
        );
        let mut placed = BTreeMap::new();
        placed.insert(1, "the ruby gate stands".to_string());
        placed.insert(2, "the onyx door waits".to_string());
        let mut swapped = BTreeMap::new();
        swapped.insert(1, "the onyx door stands".to_string());
        swapped.insert(2, "the ruby gate waits".to_string());
        let a = evaluate(&placed, &spec, &EvalOptions::default()).unwrap();
        let b = evaluate(&swapped, &spec, &EvalOptions::default()).unwrap();
        assert_eq!(a.acc_once, Some(1.0));
        assert_eq!(b.acc_once, Some(0.0));
        assert_eq!(a.completion_rate, b.completion_rate);
        assert_eq!(a.total_words, b.total_words);
    }

    #[test]
    fn random_documents_survive_render_and_segment_unchanged() {
        use rand::{Rng, SeedableRng};
        let words = ["plain", "filler", "words", "for", "unit", "bodies"];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(30);
        for round in 0..30 {
            let n = rng.random_range(1..=8);
            let spec = spec_with(n, 5, vec![]);
            let mut expected = BTreeMap::new();
            let mut raw = String::new();
            for i in 1..=n {
                let lines: Vec<String> = (0..rng.random_range(1..=3))
                    .map(|_| {
                        (0..rng.random_range(1..=6))
                            .map(|_| words[rng.random_range(0..words.len())])
                            .collect::<Vec<_>>()
                            .join(" ")
                    })
                    .collect();
                let text = lines.join("\n");
                raw.push_str(&format!("## {}\n{}\n\n", spec.unit_label(i), text));
                expected.insert(i, text);
            }
            let seg = segment_document(&raw, &spec);
            assert!(seg.warnings.is_empty(), "round {round}");
            assert_eq!(seg.units, expected, "round {round}");
        }
    }

    #[test]
    fn equal_reports_emit_identical_bytes() {
        let spec = spec_with(
            2,
            3,
            vec![Instruction::Single {
                position: 1,
                content: item("a", "ruby gate"),
            }],
        );
        let mut units = BTreeMap::new();
        units.insert(1, "ruby gate here".to_string());
        units.insert(2, "second".to_string());
        let a = evaluate(&units, &spec, &EvalOptions::default()).unwrap();
        let b = evaluate(&units, &spec, &EvalOptions::default()).unwrap();
        for f in [ReportFormat::Table, ReportFormat::Csv, ReportFormat::Structured] {
            assert_eq!(emit_report(&a, f), emit_report(&b, f));
        }
    }

    #[test]
    fn unknown_format_is_an_error() {
        assert!(ReportFormat::from_str("table").is_ok());
        assert!(ReportFormat::from_str("xml").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalize_is_idempotent(s in ".{0,200}") {
                let once = normalize(&s);
                prop_assert_eq!(normalize(&once), once);
            }

            #[test]
            fn count_words_matches_construction(tokens in proptest::collection::vec("[a-z]{1,6}", 0..50)) {
                let joined = tokens.join(" ");
                prop_assert_eq!(count_words(&joined), tokens.len());
            }

            #[test]
            fn appending_text_never_unsatisfies(
                base in "[a-z ]{0,60}",
                tail in "[a-z ]{0,30}",
                phrase in "[a-z]{1,4}( [a-z]{1,4}){0,2}",
            ) {
                for mode in [MatchMode::Substring, MatchMode::AllKeywords] {
                    let it = ContentItem { item_id: "x".into(), phrase: phrase.clone(), match_mode: mode };
                    let before = check_phrase(&it, &normalize(&base)).satisfied;
                    let after = check_phrase(&it, &normalize(&format!("{base}{tail}"))).satisfied;
                    prop_assert!(!before || after, "append must not unsatisfy ({mode:?})");
                }
            }
        }
    }
}
