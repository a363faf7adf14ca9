"""LR/HR pair construction: equalization, phase-correlation registration, filtering, splits.

Shift convention everywhere: a RegistrationResult (dr, dc) between images a and b means
b(i, j) ~= a(i - dr, j - dc), the same convention as signal_ops.shift_integer/spline_shift.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

import tracing
from analysis.run_manifest import SPLITS, clear_pair_dirs, write_manifest
from parsers import parse_pair_list
from raster import (
    STREAM_CROPS,
    STREAM_SPLITS,
    Raster,
    Rng,
    child_rng,
    derive_seed,
    extract_crops,
    load_any,
    write_raster,
)
from signal_ops import MAX_SPLINE_SHIFT, blur, decimate2, fft2, gaussian_kernel, ifft2, resample_bicubic, spline_shift
from validation import DataError, DatasetError, RegistrationError, ShapeError, require_same_shape

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.55
REGISTRATION_SIGMA = 1.0
DEGENERATE_STD = 1e-9
SPECTRUM_EPS = 1e-12


@dataclass(frozen=True)
class EqualizationCoeffs:
    """Per-band out = gain * src + offset."""

    gains: tuple[float, ...]
    offsets: tuple[float, ...]


@dataclass(frozen=True)
class RegistrationResult:
    dr: float
    dc: float
    score: float


@dataclass
class PairRecord:
    lr_path: str
    hr_path: str
    registration: RegistrationResult
    eq: EqualizationCoeffs
    scene_id: str = ""
    date: str = ""
    crop_origin: tuple[int, int] | None = None
    split: str = "train"

    @property
    def score(self) -> float:
        return self.registration.score

    def to_dict(self) -> dict[str, Any]:
        return {
            "lr_path": self.lr_path,
            "hr_path": self.hr_path,
            "source_image": self.scene_id,
            "date": self.date,
            "crop_origin": list(self.crop_origin) if self.crop_origin is not None else None,
            "shift_table": [],
            "score": self.registration.score,
            "shift": [self.registration.dr, self.registration.dc],
            "eq": {"gains": list(self.eq.gains), "offsets": list(self.eq.offsets)},
            "split": self.split,
        }


def reference_band(bands: int) -> int:
    """Band 0 drives registration: green in the G,R,B storage order, the only band otherwise."""
    if bands < 1:
        raise ShapeError(f"no bands to register, got {bands}")
    return 0


def equalize(src: Raster, ref: Raster) -> tuple[Raster, EqualizationCoeffs]:
    """Match each src band's mean and std to ref's."""
    if src.bands != ref.bands:
        raise ShapeError(f"band count mismatch: {src.bands} vs {ref.bands}")
    gains, offsets, out = [], [], []
    for b in range(src.bands):
        s = src.band(b).astype(np.float64)
        r = ref.band(b).astype(np.float64)
        mean_s, std_s = s.mean(), s.std()
        mean_r, std_r = r.mean(), r.std()
        gain = 1.0 if std_s < DEGENERATE_STD else std_r / std_s
        offset = mean_r - gain * mean_s
        gains.append(float(gain))
        offsets.append(float(offset))
        out.append(gain * s + offset)
    return Raster(np.stack(out)), EqualizationCoeffs(tuple(gains), tuple(offsets))


def _parabolic_offset(minus: float, center: float, plus: float) -> float:
    """Vertex of the parabola through the peak and its two neighbours."""
    denom = minus - 2.0 * center + plus
    if denom >= 0:
        return 0.0
    return float(np.clip(0.5 * (minus - plus) / denom, -0.5, 0.5))


def _sinc_offset(minus: float, center: float, plus: float) -> float:
    """Sub-sample peak position assuming a sampled-sinc peak.

    For a sinc both plus / (plus + center) and -minus / (minus + center) equal the offset;
    their mean is also 0 for a symmetric peak.
    """
    if center <= 0:
        return 0.0
    right = plus / (plus + center) if plus + center > 0 else 0.0
    left = -minus / (minus + center) if minus + center > 0 else 0.0
    return float(np.clip(0.5 * (right + left), -0.5, 0.5))


SUBPIXEL = {"parabolic": _parabolic_offset, "sinc": _sinc_offset}


def _normalized_cross_power(fa: np.ndarray, fb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cross = fb * np.conj(fa)
    mag = np.abs(cross)
    keep = mag > SPECTRUM_EPS * max(mag.max(), SPECTRUM_EPS)
    return np.where(keep, cross / np.where(keep, mag, 1.0), 0.0), keep


def phase_correlate(a: np.ndarray, b: np.ndarray, subpixel: str = "parabolic") -> RegistrationResult:
    """Translation of b relative to a from the Hann-windowed normalized cross-power spectrum.

    subpixel picks the peak refinement: "parabolic" (default) or "sinc".
    """
    if subpixel not in SUBPIXEL:
        raise ValueError(f"unknown subpixel method {subpixel!r}; expected one of {sorted(SUBPIXEL)}")
    refine = SUBPIXEL[subpixel]
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    require_same_shape(a, b, "phase_correlate")
    if a.var() < DEGENERATE_STD or b.var() < DEGENERATE_STD:
        raise RegistrationError("zero-variance input to phase correlation")

    h, w = a.shape
    window = np.outer(np.hanning(h), np.hanning(w))
    fa = fft2((a - a.mean()) * window)
    fb = fft2((b - b.mean()) * window)

    cross, keep = _normalized_cross_power(fa, fb)
    surface = ifft2(cross).real
    # autocorrelation peak of the normalized spectrum is the share of bins kept
    auto_peak = keep.mean()

    pr, pc = np.unravel_index(int(np.argmax(surface)), surface.shape)
    peak = surface[pr, pc]
    score = float(np.clip(peak / auto_peak, 0.0, 1.0)) if auto_peak > 0 else 0.0

    dr = refine(surface[(pr - 1) % h, pc], peak, surface[(pr + 1) % h, pc]) if h > 2 else 0.0
    dc = refine(surface[pr, (pc - 1) % w], peak, surface[pr, (pc + 1) % w]) if w > 2 else 0.0
    row = pr - h if pr > h // 2 else pr
    col = pc - w if pc > w // 2 else pc
    dr = float(np.clip(row + dr, -MAX_SPLINE_SHIFT, MAX_SPLINE_SHIFT))
    dc = float(np.clip(col + dc, -MAX_SPLINE_SHIFT, MAX_SPLINE_SHIFT))
    return RegistrationResult(dr, dc, score)


def registration_view(hr: Raster) -> np.ndarray:
    """Green band of the HR image brought to the LR grid (light anti-alias blur, x2 decimation)."""
    g = reference_band(hr.bands)
    return decimate2(blur(hr.band(g), gaussian_kernel(REGISTRATION_SIGMA)))


def register_pair(lr: Raster, hr_resampled: Raster) -> tuple[Raster, RegistrationResult]:
    """Estimate the LR-grid shift of hr_resampled against lr and undo it on the HR grid."""
    if hr_resampled.height != 2 * lr.height or hr_resampled.width != 2 * lr.width:
        raise ShapeError(f"HR {hr_resampled.shape} is not on the 2x grid of LR {lr.shape}")
    if hr_resampled.bands != lr.bands:
        raise ShapeError(f"band count mismatch: {lr.bands} vs {hr_resampled.bands}")

    g = reference_band(lr.bands)
    result = phase_correlate(lr.band(g), registration_view(hr_resampled))
    hr_dr, hr_dc = -2.0 * result.dr, -2.0 * result.dc
    if abs(hr_dr) > MAX_SPLINE_SHIFT or abs(hr_dc) > MAX_SPLINE_SHIFT:
        raise RegistrationError(f"estimated shift ({result.dr:.2f}, {result.dc:.2f}) LR px is out of range")
    shifted = np.stack([spline_shift(hr_resampled.band(b), hr_dr, hr_dc) for b in range(hr_resampled.bands)])
    return Raster(shifted), result


def filter_pairs(
    records: Sequence[PairRecord], threshold: float = DEFAULT_THRESHOLD
) -> tuple[list[PairRecord], list[PairRecord]]:
    """Keep records scoring at least threshold (inclusive)."""
    kept = [r for r in records if r.score >= threshold]
    rejected = [r for r in records if r.score < threshold]
    tracing.emit("pairs_filtered", "pairing.filter_pairs", threshold=threshold, kept=len(kept), rejected=len(rejected))
    return kept, rejected


def _split_count(fraction: float, scenes: int) -> int:
    if fraction <= 0:
        return 0
    return max(1, int(math.floor(fraction * scenes + 0.5)))


def assign_scene_splits(
    scene_ids: Sequence[str],
    test_fraction: float,
    val_fraction: float,
    rng: Rng,
    dates: Mapping[str, str] | None = None,
) -> dict[str, str]:
    """Scene -> split. Fractions are rounded at scene granularity; at least one train scene.

    With a date for every scene, test and val take whole acquisition dates, so no training
    date reappears in them.
    """
    scenes = sorted(set(scene_ids))
    n_test = _split_count(test_fraction, len(scenes))
    n_val = _split_count(val_fraction, len(scenes))
    if n_test + n_val + 1 > len(scenes):
        raise DatasetError(
            f"{len(scenes)} scene(s) cannot fill train plus {n_test} test and {n_val} val scene(s)"
        )
    if dates and all(dates.get(s) for s in scenes):
        return _assign_by_date(scenes, dates, n_test, n_val, rng)
    order = [scenes[int(k)] for k in rng.permutation(len(scenes))]
    assignment = {s: "test" for s in order[:n_test]}
    assignment.update({s: "val" for s in order[n_test : n_test + n_val]})
    assignment.update({s: "train" for s in order[n_test + n_val :]})
    return assignment


def _assign_by_date(
    scenes: Sequence[str], dates: Mapping[str, str], n_test: int, n_val: int, rng: Rng
) -> dict[str, str]:
    by_date: dict[str, list[str]] = {}
    for s in scenes:
        by_date.setdefault(dates[s], []).append(s)
    days = sorted(by_date)
    needed = (n_test > 0) + (n_val > 0) + 1
    if len(days) < needed:
        raise DatasetError(f"{len(days)} acquisition date(s) cannot give train, val and test disjoint dates")

    assignment: dict[str, str] = {}
    counts = {"test": 0, "val": 0}
    order = [days[int(k)] for k in rng.permutation(len(days))]
    for i, day in enumerate(order):
        left = len(order) - i
        if counts["test"] < n_test and left > (n_val > counts["val"]) + 1:
            split = "test"
        elif counts["val"] < n_val and left > 1:
            split = "val"
        else:
            split = "train"
        if split != "train":
            counts[split] += len(by_date[day])
        assignment.update({s: split for s in by_date[day]})
    return assignment


def assemble_splits(
    records: Sequence[PairRecord], test_fraction: float, val_fraction: float, rng: Rng
) -> list[str]:
    """Scene-disjoint split per record; records are updated in place and the splits returned.

    Scene dates come from the records; a scene seen under several dates keeps the earliest.
    """
    dates: dict[str, str] = {}
    for r in records:
        if r.date and (r.scene_id not in dates or r.date < dates[r.scene_id]):
            dates[r.scene_id] = r.date
    assignment = assign_scene_splits([r.scene_id for r in records], test_fraction, val_fraction, rng, dates)
    for r in records:
        r.split = assignment[r.scene_id]
    return [r.split for r in records]


@dataclass
class PairingConfig:
    threshold: float = DEFAULT_THRESHOLD
    crop: int = 64
    max_crops: int = 20
    test_fraction: float = 0.2
    val_fraction: float = 0.1
    seed: int = 0

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class _ScenePair:
    entry: dict[str, Any]
    record: PairRecord
    lr: Raster | None = None
    hr: Raster | None = None
    reason: str = field(default="")


def prepare_scene(entry: dict[str, Any]) -> _ScenePair:
    """Load, resample HR onto the 2x LR grid, equalize HR to LR statistics, register."""
    lr = load_any(entry["lr_path"])
    hr = load_any(entry["hr_path"])
    if hr.bands != lr.bands:
        raise ShapeError(f"band count mismatch: {lr.bands} vs {hr.bands}")
    target = (2 * lr.height, 2 * lr.width)
    if (hr.height, hr.width) != target:
        hr = Raster(np.stack([resample_bicubic(hr.band(b), target) for b in range(hr.bands)]))
    hr_eq, eq = equalize(hr, lr)
    hr_reg, result = register_pair(lr, hr_eq)
    record = PairRecord(
        entry["lr_path"], entry["hr_path"], result, eq, scene_id=entry["scene_id"], date=entry.get("date", "")
    )
    return _ScenePair(entry, record, lr, hr_reg)


def run_pairing(list_file: str | Path, out_dir: str | Path, cfg: PairingConfig) -> dict[str, Any]:
    """End-to-end pair construction from a pairing list; writes crops and manifest.json."""
    out_dir = Path(out_dir)
    entries = parse_pair_list(list_file)
    if not entries:
        raise DatasetError("pairing list is empty", list_file)

    scenes: list[_ScenePair] = []
    failed: list[dict[str, Any]] = []
    for entry in entries:
        try:
            scenes.append(prepare_scene(entry))
        except DataError as e:
            logger.warning("pair %s / %s rejected: %s", entry["lr_path"], entry["hr_path"], e.msg)
            failed.append({"lr_path": entry["lr_path"], "hr_path": entry["hr_path"], "score": 0.0, "reason": e.msg})

    kept, rejected = filter_pairs([s.record for s in scenes], cfg.threshold)
    kept_ids = {id(r) for r in kept}
    rejected_out = failed + [
        {"lr_path": r.lr_path, "hr_path": r.hr_path, "score": r.score, "reason": "score below threshold"}
        for r in rejected
    ]

    clear_pair_dirs(out_dir)
    crops: list[PairRecord] = []
    for idx, scene in enumerate(scenes):
        if id(scene.record) not in kept_ids:
            continue
        rng = child_rng(derive_seed(cfg.seed, idx), STREAM_CROPS)
        size = min(cfg.crop, scene.lr.height, scene.lr.width)
        stem = f"{idx:04d}_{Path(scene.entry['lr_path']).stem}"
        for k, (spec, lr_crop, hr_crop) in enumerate(extract_crops(scene.lr, scene.hr, size, cfg.max_crops, rng)):
            lr_rel, hr_rel = f"lr/{stem}_{k:02d}.ras", f"hr/{stem}_{k:02d}.ras"
            write_raster(lr_crop, out_dir / lr_rel)
            write_raster(hr_crop, out_dir / hr_rel)
            src = scene.record
            crops.append(
                PairRecord(lr_rel, hr_rel, src.registration, src.eq, src.scene_id, src.date, (spec.row, spec.col))
            )

    if crops:
        assemble_splits(crops, cfg.test_fraction, cfg.val_fraction, child_rng(cfg.seed, STREAM_SPLITS))

    manifest = {
        "config": {"kind": "pairing", **cfg.to_dict()},
        "seed": cfg.seed,
        "scenes": len(entries),
        "kept": len(kept),
        "rejected": rejected_out,
        "split_counts": {s: sum(1 for c in crops if c.split == s) for s in SPLITS},
        "pairs": [c.to_dict() for c in crops],
    }
    write_manifest(out_dir, manifest)
    tracing.emit("pairing_done", "pairing.run_pairing", kept=len(kept), rejected=len(rejected_out), crops=len(crops))
    return manifest
