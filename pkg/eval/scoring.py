"""PSNR on the 12-bit scale and the evaluation report format."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from raster import PEAK, Raster
from validation import DatasetError, ShapeError

INF = math.inf


def _values(x: Raster | np.ndarray) -> np.ndarray:
    return np.asarray(x.data if isinstance(x, Raster) else x, dtype=np.float64)


def psnr(pred: Raster | np.ndarray, ref: Raster | np.ndarray, peak: float = PEAK) -> float:
    """10*log10(peak^2 / MSE) over all bands jointly; +inf when identical."""
    a, b = _values(pred), _values(ref)
    if a.shape != b.shape:
        raise ShapeError(f"psnr: shape {a.shape} != {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return INF
    return 10.0 * math.log10(peak * peak / mse)


def mean_psnr(values: list[float]) -> float:
    if not values:
        return math.nan
    return math.fsum(values) / len(values)


def format_db(value: float) -> str:
    if math.isinf(value):
        return "inf"
    if math.isnan(value):
        return "-"
    return f"{value:.2f}"


def encode_db(value: float) -> float | str:
    if math.isinf(value) or math.isnan(value):
        return "inf" if math.isinf(value) else "nan"
    return value


def decode_db(value: float | str) -> float:
    return float(value)


@dataclass
class SplitScores:
    mean_psnr: float
    bicubic_psnr: float
    pairs: list[dict[str, Any]] = field(default_factory=list)

    @classmethod
    def from_pairs(cls, pairs: list[dict[str, Any]]) -> SplitScores:
        return cls(mean_psnr([p["psnr"] for p in pairs]), mean_psnr([p["bicubic_psnr"] for p in pairs]), pairs)


@dataclass
class EvalReport:
    """Per-split PSNR of one checkpoint on one dataset. runtime_s is kept out of the report file."""

    config: str
    checkpoint_sha256: str
    splits: dict[str, SplitScores]
    samples: list[dict[str, str]] = field(default_factory=list)
    runtime_s: float = 0.0

    def split_psnr(self, split: str) -> float:
        s = self.splits.get(split)
        return s.mean_psnr if s is not None else math.nan

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": self.config,
            "checkpoint_sha256": self.checkpoint_sha256,
            "splits": {
                name: {
                    "mean_psnr": encode_db(s.mean_psnr),
                    "bicubic_psnr": encode_db(s.bicubic_psnr),
                    "pairs": [
                        {**p, "psnr": encode_db(p["psnr"]), "bicubic_psnr": encode_db(p["bicubic_psnr"])} for p in s.pairs
                    ],
                }
                for name, s in self.splits.items()
            },
            "samples": self.samples,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> EvalReport:
        splits = {}
        for name, s in d["splits"].items():
            pairs = [{**p, "psnr": decode_db(p["psnr"]), "bicubic_psnr": decode_db(p["bicubic_psnr"])} for p in s["pairs"]]
            splits[name] = SplitScores(decode_db(s["mean_psnr"]), decode_db(s["bicubic_psnr"]), pairs)
        return cls(d["config"], d["checkpoint_sha256"], splits, d.get("samples", []))

    def write(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")


def read_report(path: str | Path) -> EvalReport:
    path = Path(path)
    if not path.exists():
        raise DatasetError("report not found", path)
    with open(path) as f:
        return EvalReport.from_dict(json.load(f))
