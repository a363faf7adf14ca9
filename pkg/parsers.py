"""Parse pairing lists (JSON) and loss histories (CSV) into plain records."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any

from validation import DatasetError, validate_records

PAIR_LIST_FIELDS = ["lr_path", "hr_path", "scene_id"]


def parse_pair_records(raw: str, source: str | Path | None = None) -> list[dict[str, Any]]:
    """Pair records from JSON: a list, a {"pairs": [...]} wrapper or one bare record."""
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as e:
        raise DatasetError(f"malformed pairing list: {e}", source) from e
    if isinstance(data, dict):
        data = data["pairs"] if isinstance(data.get("pairs"), list) else [data]
    if not isinstance(data, list):
        raise DatasetError(f"pairing list must be a JSON array, got {type(data).__name__}", source)
    return data


def parse_pair_list(path: str | Path) -> list[dict[str, Any]]:
    """Pairing list: [{lr_path, hr_path, scene_id, date}]. Relative paths resolve against the file."""
    path = Path(path)
    if not path.exists():
        raise DatasetError("pairing list not found", path)
    records = parse_pair_records(path.read_text(), path)
    validate_records(records, required=PAIR_LIST_FIELDS, types={"lr_path": str, "hr_path": str}, source=path)
    out = []
    for rec in records:
        rec = dict(rec)
        rec["scene_id"] = str(rec["scene_id"])
        rec["date"] = str(rec.get("date", ""))
        for key in ("lr_path", "hr_path"):
            p = Path(rec[key])
            rec[key] = str(p if p.is_absolute() else path.parent / p)
        out.append(rec)
    return out


def format_loss_csv(history: list[tuple[int, float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iteration", "loss"])
    for it, loss in history:
        writer.writerow([it, repr(float(loss))])
    return buf.getvalue()


def parse_loss_csv(raw: str) -> list[tuple[int, float]]:
    """Loss history CSV (iteration, loss). Headers are lowercased."""
    reader = csv.DictReader(io.StringIO(raw))
    rows = [{k.lower(): v for k, v in row.items()} for row in reader]
    return [(int(r["iteration"]), float(r["loss"])) for r in rows]
