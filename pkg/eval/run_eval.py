#!/usr/bin/env python3
"""
Inference and evaluation runner: tiled x2 inference of a checkpoint over the pairs of a
manifest, per-pair PSNR against HR and against the bicubic baseline, EvalReport output.
"""

from __future__ import annotations

import logging
import time
from pathlib import Path
from typing import Any, Sequence

import numpy as np

import tracing
from analysis.run_manifest import load_manifest, load_pair, pairs_in_split
from autograd import TensorNode, no_grad
from eval.scoring import EvalReport, SplitScores, psnr
from raster import PEAK, Raster, write_raster
from signal_ops import bicubic_upsample2
from srnet import ModelParams, ModelSpec, checkpoint_hash, load_checkpoint, model_forward
from validation import DatasetError, ShapeError

logger = logging.getLogger(__name__)

MIN_OVERLAP = 8
FEATHER = 2  # HR px over which neighbouring tiles cross-fade
DEFAULT_TILE = 64

Model = tuple[ModelSpec, ModelParams]


def load_model(ckpt: str | Path | Model) -> Model:
    if isinstance(ckpt, tuple):
        return ckpt
    spec, params, _ = load_checkpoint(ckpt)
    return spec, params


def forward_array(model: Model, x: np.ndarray) -> np.ndarray:
    """(C, H, W) normalized LR -> (C, 2H, 2W) normalized prediction."""
    spec, params = model
    with no_grad():
        out = model_forward(TensorNode(x[None].astype(np.float32)), params.nodes(), spec)
    return out.data[0]


def _tile_starts(n: int, tile: int, overlap: int) -> list[int]:
    if n <= tile:
        return [0]
    starts = list(range(0, n - tile, tile - overlap))
    return starts + [n - tile]


def _edge_weights(length: int, lead_inner: bool, trail_inner: bool, overlap: int) -> np.ndarray:
    """1-D blend weights (HR px). A tile only contributes from half the overlap inward."""
    d = np.arange(length, dtype=np.float64)
    w = np.ones(length)
    guard = overlap - FEATHER
    if lead_inner:
        w = np.minimum(w, np.clip((d - guard) / FEATHER, 0.0, 1.0))
    if trail_inner:
        w = np.minimum(w, np.clip((length - 1 - d - guard) / FEATHER, 0.0, 1.0))
    return w


def infer(ckpt: str | Path | Model, lr: Raster, tile: int = DEFAULT_TILE, overlap: int = MIN_OVERLAP) -> Raster:
    """x2 prediction of a whole scene from independent tiles blended in their overlaps."""
    model = load_model(ckpt)
    spec = model[0]
    if lr.bands != spec.in_bands:
        raise ShapeError(f"checkpoint expects {spec.in_bands} band(s), scene has {lr.bands}")
    if overlap < MIN_OVERLAP:
        raise ValueError(f"overlap must be >= {MIN_OVERLAP}, got {overlap}")
    if tile <= overlap:
        raise ValueError(f"tile {tile} must exceed overlap {overlap}")

    x = lr.data.astype(np.float32) / np.float32(PEAK)
    _, h, w = x.shape
    th, tw = min(tile, h), min(tile, w)
    if th == h and tw == w:
        return Raster(forward_array(model, x) * PEAK)

    acc = np.zeros((spec.in_bands, 2 * h, 2 * w))
    weight = np.zeros((2 * h, 2 * w))
    rows, cols = _tile_starts(h, th, overlap), _tile_starts(w, tw, overlap)
    for r in rows:
        wr = _edge_weights(2 * th, r > 0, r + th < h, overlap)
        for c in cols:
            wc = _edge_weights(2 * tw, c > 0, c + tw < w, overlap)
            out = forward_array(model, x[:, r : r + th, c : c + tw])
            wmap = np.outer(wr, wc)
            acc[:, 2 * r : 2 * (r + th), 2 * c : 2 * (c + tw)] += out * wmap
            weight[2 * r : 2 * (r + th), 2 * c : 2 * (c + tw)] += wmap
    return Raster(acc / weight * PEAK)


def bicubic_baseline(lr: Raster) -> Raster:
    return Raster(bicubic_upsample2(lr.data))


def score_pairs(
    predict: Any,
    manifest: dict[str, Any],
    split: str,
    bands: Sequence[int] | None = None,
) -> tuple[list[dict[str, Any]], list[tuple[Raster, Raster, Raster, dict]]]:
    """PSNR of predict(lr) and of bicubic for each pair of a split. Also returns (lr, sr, hr, pair)."""
    rows, outputs = [], []
    for pair in pairs_in_split(manifest, split):
        lr, hr = load_pair(manifest, pair)
        if bands is not None:
            lr, hr = lr.select(list(bands)), hr.select(list(bands))
        sr = predict(lr)
        rows.append(
            {"lr_path": pair["lr_path"], "psnr": psnr(sr, hr), "bicubic_psnr": psnr(bicubic_baseline(lr), hr)}
        )
        outputs.append((lr, sr, hr, pair))
    return rows, outputs


def evaluate_checkpoint(
    ckpt: str | Path,
    manifest: dict[str, Any] | str | Path,
    splits: Sequence[str] = ("test",),
    *,
    tile: int = DEFAULT_TILE,
    overlap: int = MIN_OVERLAP,
    samples_dir: str | Path | None = None,
    n_samples: int = 3,
    bands: Sequence[int] | None = None,
) -> EvalReport:
    start = time.perf_counter()
    m = manifest if isinstance(manifest, dict) else load_manifest(manifest)
    model = load_model(ckpt)
    scores: dict[str, SplitScores] = {}
    samples: list[dict[str, str]] = []
    root = Path(m.get("_root", "."))
    for split in splits:
        rows, outputs = score_pairs(lambda lr: infer(model, lr, tile, overlap), m, split, bands)
        if not rows:
            logger.warning("split %s has no pairs", split)
        scores[split] = SplitScores.from_pairs(rows)
        if samples_dir is not None:
            for k, (_, sr, _, pair) in enumerate(outputs[: max(0, n_samples - len(samples))]):
                sr_path = Path(samples_dir) / f"{split}_sr_{k:02d}.ras"
                write_raster(sr, sr_path)
                samples.append(
                    {"lr_path": str(root / pair["lr_path"]), "sr_path": str(sr_path), "hr_path": str(root / pair["hr_path"])}
                )
    if not any(s.pairs for s in scores.values()):
        raise DatasetError(f"no pairs to evaluate in splits {list(splits)}")
    config = m.get("config", {})
    report = EvalReport(
        config=str(config.get("id", config.get("kind", "unknown"))),
        checkpoint_sha256=checkpoint_hash(ckpt),
        splits=scores,
        samples=samples,
        runtime_s=time.perf_counter() - start,
    )
    tracing.emit(
        "evaluated",
        "run_eval.evaluate_checkpoint",
        config=report.config,
        splits={k: report.split_psnr(k) for k in scores},
        runtime_s=report.runtime_s,
    )
    return report
