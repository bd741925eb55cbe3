#!/usr/bin/env python3
"""Smoke test for the planwright Python extension.

Builds nothing itself: run `cargo build -p planwright-py` (or --release)
first, then `python3 python/smoke_test.py`. The script locates the compiled
cdylib, exposes it as an importable module, and drives the pipeline end to
end against the scripted backend.
"""

import json
import pathlib
import shutil
import sys
import sysconfig
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def import_planwright():
    candidates = [
        ROOT / "target" / profile / name
        for profile in ("release", "debug")
        for name in ("libplanwright.so", "libplanwright.dylib", "planwright.dll")
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("error: build the extension first: cargo build -p planwright-py")
    stage = pathlib.Path(tempfile.mkdtemp(prefix="planwright-py-"))
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    shutil.copy2(built, stage / f"planwright{suffix}")
    sys.path.insert(0, str(stage))
    import planwright  # noqa: E402

    return planwright


def main():
    pw = import_planwright()

    # Text primitives.
    assert pw.normalize("  Medical\n Center ") == "medical center"
    assert pw.count_words("The quick brown fox") == 4

    # Task generation is deterministic and valid.
    task = pw.make_task_json("custom", seed=7, units=6, target_length=30)
    assert task == pw.make_task_json("custom", seed=7, units=6, target_length=30)
    assert pw.validate_task_json(task) == []
    spec = json.loads(task)
    assert spec["schema"] == "taskspec/1"
    assert spec["unit_count"] == 6

    # Check-set expansion.
    entries = json.loads(pw.expand_check_set_json(task))
    assert entries, "expected at least one requirement"
    assert all(1 <= e["unit"] <= 6 for e in entries)

    # Tolerant plan parsing and repair.
    plan_text, defects, unrepaired = pw.parse_and_repair_plan(
        "Unit 1: settle in\n2. look around\n", expected_units=3
    )
    assert any("missing_header" in d for d in defects)
    assert any("index_gap" in d for d in unrepaired)
    assert plan_text.splitlines()[0].startswith("PLAN")

    # Closed loop against a perfect scripted backend.
    script = pw.make_perfect_script_json(task)
    plan_out, document, report_json = pw.run_scripted(task, script)
    report = json.loads(report_json)
    assert report["schema"] == "evalreport/1"
    assert report["completion_rate"] == 1.0
    assert report["avg_acc"] == 1.0
    assert report["total_words"] >= 6 * 30
    assert len(report["per_unit_words"]) == 6
    assert plan_out.splitlines()[0] == f"PLAN {spec['task_id']} UNITS 6"

    # External scoring of the same document agrees with the run report.
    rescored = json.loads(pw.evaluate_document(task, document))
    assert rescored == report

    # Reference documents score exactly as constructed.
    doc, expected_json = pw.make_reference_document(
        task, omit_unit=0.2, omit_phrase=0.3, short_unit=0.3, seed=11
    )
    expected = json.loads(expected_json)
    actual = json.loads(pw.evaluate_document(task, doc))
    for key in ("completion_rate", "acc_once", "acc_range", "acc_periodic",
                "avg_acc", "total_words", "per_unit_words", "meets_word_floor"):
        assert expected.get(key) == actual.get(key), key

    # A faulty backend scores worse than the full pipeline fixes allow.
    fault_script = pw.make_fault_script_json(task, seed=3)
    _, _, degraded_json = pw.run_scripted(
        task, fault_script, plan_adjust=False, max_plan_revisions=0
    )
    _, _, repaired_json = pw.run_scripted(task, fault_script)
    degraded = json.loads(degraded_json)
    repaired = json.loads(repaired_json)
    assert repaired["avg_acc"] >= degraded["avg_acc"]
    assert repaired["avg_acc"] == 1.0

    # Prompt templates fill without residual markers.
    prompt = pw.fill_template(
        "p_length",
        {
            "unit_label": "Unit 2",
            "unit_plan": "rest",
            "current_text": "short",
            "target_length": "30",
            "direction": "expand",
        },
    )
    assert "{" not in prompt

    print("smoke test passed:", len(entries), "requirements,",
          report["total_words"], "words generated,",
          f"avg_acc {report['avg_acc']:.2f}")


if __name__ == "__main__":
    main()
