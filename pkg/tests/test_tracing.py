"""Tests for the trace event writer."""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

import tracing


def test_events_go_to_trace_jsonl(tmp_path):
    tracing.init(tmp_path / "run")
    try:
        tracing.emit("dataset_built", "acquisition.build_synthetic_dataset", config="alias:fixed", pairs=4)
        tracing.emit("evaluated", "run_eval.evaluate_checkpoint", path=tmp_path)
    finally:
        tracing.close()
    lines = (tmp_path / "run" / "trace.jsonl").read_text().splitlines()
    first, second = (json.loads(line) for line in lines)
    assert first["event"] == "dataset_built"
    assert first["pairs"] == 4
    assert "ts" in first
    assert second["path"] == str(tmp_path)


def test_emit_without_init_is_silent(tmp_path):
    tracing.close()
    tracing.emit("noop", "test")
    assert not (tmp_path / "trace.jsonl").exists()


def test_init_truncates_previous_run(tmp_path):
    tracing.init(tmp_path)
    tracing.emit("a", "test")
    tracing.init(tmp_path)
    tracing.emit("b", "test")
    tracing.close()
    events = [json.loads(line)["event"] for line in (tmp_path / "trace.jsonl").read_text().splitlines()]
    assert events == ["b"]
