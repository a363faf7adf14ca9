"""Write and read dataset manifests.

manifest.json contains: manifest_version, config, seed, pairs (paths relative to the manifest
directory) plus producer-specific fields (skipped counts, pairing statistics).
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

from raster import Raster, read_raster
from validation import DatasetError

logger = logging.getLogger(__name__)

MANIFEST_VERSION = "1"
MANIFEST_NAME = "manifest.json"
SPLITS = ("train", "val", "test")


def manifest_path(run_path: str | Path) -> Path:
    p = Path(run_path)
    return p if p.suffix == ".json" else p / MANIFEST_NAME


def clear_pair_dirs(run_path: str | Path) -> int:
    """Drop lr/ and hr/ crops left by an earlier build into the same dataset folder."""
    stale = [p for sub in ("lr", "hr") for p in sorted((Path(run_path) / sub).glob("*.ras"))]
    for p in stale:
        p.unlink()
    if stale:
        logger.info("removed %d stale crop(s) from %s", len(stale), run_path)
    return len(stale)


def write_manifest(run_path: Path, manifest: dict[str, Any]) -> Path:
    """Write manifest.json for a dataset folder. Output bytes depend only on the content."""
    out = Path(run_path) / MANIFEST_NAME
    out.parent.mkdir(parents=True, exist_ok=True)
    body = {"manifest_version": MANIFEST_VERSION, **manifest}
    with open(out, "w") as f:
        json.dump(body, f, indent=2)
        f.write("\n")
    return out


def read_manifest(run_path: str | Path) -> dict | None:
    """Read manifest.json. Returns None if missing."""
    p = manifest_path(run_path)
    if not p.exists():
        return None
    with open(p) as f:
        return json.load(f)


def load_manifest(run_path: str | Path) -> dict:
    """Like read_manifest, but missing or malformed manifests raise DatasetError."""
    p = manifest_path(run_path)
    try:
        m = read_manifest(p)
    except json.JSONDecodeError as e:
        raise DatasetError(f"malformed manifest: {e}", p) from e
    if m is None:
        raise DatasetError("manifest not found", p)
    if not isinstance(m.get("pairs"), list):
        raise DatasetError("manifest has no pairs list", p)
    m["_root"] = str(p.parent)
    return m


def pairs_in_split(manifest: dict, split: str | None) -> list[dict]:
    """Pairs of one split; split=None or 'all' returns every pair."""
    pairs = manifest["pairs"]
    if split in (None, "all"):
        return list(pairs)
    if split not in SPLITS:
        raise ValueError(f"unknown split: {split}")
    return [p for p in pairs if p.get("split", "train") == split]


def load_pair(manifest: dict, pair: dict) -> tuple[Raster, Raster]:
    """(LR, HR) rasters of a manifest entry."""
    root = Path(manifest.get("_root", "."))
    return read_raster(root / pair["lr_path"]), read_raster(root / pair["hr_path"])
