"""Run evidence: one JSON line per pipeline event in <run_dir>/trace.jsonl.

Library modules call emit() unconditionally; only CLI entry points open a sink.
"""

from __future__ import annotations

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import IO, Any

import numpy as np

logger = logging.getLogger("tracing")

TRACE_NAME = "trace.jsonl"

_sink: IO[str] | None = None


def init(run_dir: str | Path) -> Path:
    """Open (truncate) run_dir/trace.jsonl as the event sink; closes any previous sink."""
    global _sink
    close()
    path = Path(run_dir) / TRACE_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    _sink = open(path, "w")
    return path


def close() -> None:
    global _sink
    if _sink is not None:
        _sink.close()
    _sink = None


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


def emit(event: str, source: str, **data: Any) -> None:
    """Record an event; source is module.function. Without a sink the line goes to the DEBUG log."""
    line = json.dumps({"ts": datetime.now().isoformat(), "event": event, "source": source, **data}, default=_jsonable)
    if _sink is not None:
        _sink.write(line + "\n")
        _sink.flush()
    else:
        logger.debug("%s", line)
