"""LR synthesis under the six acquisition configurations (alias x inter-band shift).

Per band: integer HR shift -> Gaussian blur (MTF proxy) -> x2 decimation ->
half-shift compensation on the LR grid -> additive noise.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from enum import Enum
from multiprocessing import Pool
from pathlib import Path
from typing import Any

import numpy as np

import tracing
from analysis.run_manifest import SPLITS, clear_pair_dirs, write_manifest
from ingestion import ingest_directory, list_hr_files
from pairing import assign_scene_splits, reference_band
from raster import (
    STREAM_CROPS,
    STREAM_NOISE,
    STREAM_SHIFTS,
    STREAM_SPLITS,
    CropSpec,
    Raster,
    Rng,
    child_rng,
    derive_seed,
    extract_crops,
    write_raster,
)
from signal_ops import add_noise, alias_energy_ratio, blur, decimate2, gaussian_kernel, shift_integer, spline_shift
from validation import DatasetError, ShapeError

logger = logging.getLogger(__name__)

SIGMA_ALIAS = 0.7
SIGMA_NOALIAS = 2.4
NOISE_LEVEL = 0.001


class ShiftMode(str, Enum):
    NONE = "none"
    FIXED = "fixed"
    RANDOM = "random"


@dataclass(frozen=True)
class AcquisitionConfig:
    alias: bool
    shift_mode: ShiftMode
    sigma_alias: float = SIGMA_ALIAS
    sigma_noalias: float = SIGMA_NOALIAS
    noise_level: float = NOISE_LEVEL
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "shift_mode", ShiftMode(self.shift_mode))
        if self.sigma_alias <= 0 or self.sigma_noalias <= 0:
            raise ValueError("blur sigmas must be positive")
        if self.noise_level < 0:
            raise ValueError(f"noise level must be >= 0, got {self.noise_level}")

    @property
    def sigma(self) -> float:
        return self.sigma_alias if self.alias else self.sigma_noalias

    @property
    def config_id(self) -> str:
        return f"{'alias' if self.alias else 'noalias'}:{self.shift_mode.value}"

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["shift_mode"] = self.shift_mode.value
        d["id"] = self.config_id
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> AcquisitionConfig:
        return cls(**{k: v for k, v in d.items() if k != "id"})


def parse_config_id(config_id: str, **overrides: Any) -> AcquisitionConfig:
    """'alias:fixed' -> AcquisitionConfig(alias=True, shift_mode=FIXED, ...)."""
    try:
        alias_part, mode_part = config_id.strip().lower().split(":")
        mode = ShiftMode(mode_part)
    except ValueError:
        raise ValueError(f"config must be {{alias|noalias}}:{{none|fixed|random}}, got {config_id!r}") from None
    if alias_part not in ("alias", "noalias"):
        raise ValueError(f"config must be {{alias|noalias}}:{{none|fixed|random}}, got {config_id!r}")
    return AcquisitionConfig(alias=alias_part == "alias", shift_mode=mode, **overrides)


def canonical_configs(**overrides: Any) -> list[AcquisitionConfig]:
    """The six configurations in table row order: no alias first, then alias; none, fixed, random."""
    return [
        AcquisitionConfig(alias=alias, shift_mode=mode, **overrides)
        for alias in (False, True)
        for mode in (ShiftMode.NONE, ShiftMode.FIXED, ShiftMode.RANDOM)
    ]


@dataclass(frozen=True)
class BandShiftTable:
    """Per-band integer HR offsets (dr, dc); the reference band stays at (0, 0)."""

    offsets: tuple[tuple[int, int], ...]
    reference: int

    def __getitem__(self, b: int) -> tuple[int, int]:
        return self.offsets[b]

    def __len__(self) -> int:
        return len(self.offsets)

    @property
    def is_zero(self) -> bool:
        return all(o == (0, 0) for o in self.offsets)

    def to_list(self) -> list[list[int]]:
        return [list(o) for o in self.offsets]


# G, R, B band order; green is the reference.
FIXED_SHIFTS = ((0, 0), (1, 0), (0, 1))


def make_shift_table(mode: ShiftMode, rng: Rng, bands: int = 3) -> BandShiftTable:
    mode = ShiftMode(mode)
    ref = reference_band(bands)
    if mode is ShiftMode.NONE or bands == 1:
        return BandShiftTable(((0, 0),) * bands, ref)
    if mode is ShiftMode.FIXED:
        if bands != 3:
            raise ShapeError(f"fixed shift table is defined for 3 bands, got {bands}")
        return BandShiftTable(FIXED_SHIFTS, ref)
    offsets = []
    for b in range(bands):
        if b == ref:
            offsets.append((0, 0))
        else:
            dr, dc = rng.choice((-1, 1), size=2)
            offsets.append((int(dr), int(dc)))
    return BandShiftTable(tuple(offsets), ref)


def simulate_lr(hr: Raster, cfg: AcquisitionConfig, shifts: BandShiftTable, rng: Rng) -> Raster:
    """Synthesize the LR image of one HR raster. Output dims are hr dims / 2."""
    if hr.height % 2 or hr.width % 2:
        raise ShapeError(f"HR dimensions must be even, got {hr.height}x{hr.width}")
    if hr.bands != len(shifts):
        raise ShapeError(f"HR has {hr.bands} bands, shift table has {len(shifts)}")

    kernel = gaussian_kernel(cfg.sigma)
    out = []
    for b in range(hr.bands):
        dr, dc = shifts[b]
        x = shift_integer(hr.band(b), dr, dc)
        x = decimate2(blur(x, kernel))
        x = spline_shift(x, -dr / 2.0, -dc / 2.0)
        out.append(add_noise(x, cfg.noise_level, rng))
    return Raster(np.stack(out))


def _simulate_image(
    idx: int, hr: Raster, cfg: AcquisitionConfig, seed: int, crop: int, max_crops: int
) -> tuple[BandShiftTable, list[tuple[CropSpec, Raster, Raster]] | None]:
    """One HR image -> its shift table and LR/HR crops; None when the LR is smaller than crop."""
    image_seed = derive_seed(seed, idx)
    table = make_shift_table(cfg.shift_mode, child_rng(image_seed, STREAM_SHIFTS), hr.bands)
    lr = simulate_lr(hr, cfg, table, child_rng(image_seed, STREAM_NOISE))
    if crop > min(lr.height, lr.width):
        return table, None
    return table, extract_crops(lr, hr, crop, max_crops, child_rng(image_seed, STREAM_CROPS))


def build_synthetic_dataset(
    hr_dir: str | Path,
    cfg: AcquisitionConfig,
    out_dir: str | Path,
    crop: int,
    max_crops: int,
    seed: int,
    *,
    test_fraction: float = 0.2,
    val_fraction: float = 0.1,
    workers: int = 1,
) -> dict[str, Any]:
    """Simulate every HR image, cut LR/HR crop pairs, assign scene-disjoint splits, write manifest.json.

    workers > 1 simulates images in a process pool; each image draws from its own seeded
    streams, so the output does not depend on the worker count.
    """
    out_dir = Path(out_dir)
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    if Path(hr_dir).resolve() in {(out_dir / sub).resolve() for sub in ("lr", "hr")}:
        raise ValueError(f"HR corpus {hr_dir} sits where crops are written")
    if not list_hr_files(hr_dir):
        raise DatasetError("no HR images found", hr_dir)
    loaded, skipped = ingest_directory(hr_dir)
    if not loaded:
        raise DatasetError("no readable HR images", hr_dir)

    jobs = [(idx, hr, cfg, seed, crop, max_crops) for idx, (_, hr) in enumerate(loaded)]
    if workers > 1 and len(jobs) > 1:
        with Pool(min(workers, len(jobs))) as pool:
            results = pool.starmap(_simulate_image, jobs)
    else:
        results = [_simulate_image(*job) for job in jobs]

    clear_pair_dirs(out_dir)
    pairs: list[dict[str, Any]] = []
    for idx, ((path, _), (table, crops)) in enumerate(zip(loaded, results)):
        if crops is None:
            logger.warning("skipping %s: LR smaller than crop %d", path.name, crop)
            skipped.append(path)
            continue
        stem = f"{idx:04d}_{path.stem}"
        for k, (spec, lr_crop, hr_crop) in enumerate(crops):
            lr_rel, hr_rel = f"lr/{stem}_{k:02d}.ras", f"hr/{stem}_{k:02d}.ras"
            write_raster(lr_crop, out_dir / lr_rel)
            write_raster(hr_crop, out_dir / hr_rel)
            pairs.append(
                {
                    "lr_path": lr_rel,
                    "hr_path": hr_rel,
                    "source_image": path.name,
                    "crop_origin": [spec.row, spec.col],
                    "shift_table": table.to_list(),
                }
            )
        tracing.emit("image_simulated", "acquisition.build_synthetic_dataset", image=path.name, shifts=table.to_list())

    if not pairs:
        raise DatasetError(f"no HR image is large enough for LR crops of {crop} px", hr_dir)
    scenes = sorted({p["source_image"] for p in pairs})
    try:
        assignment = assign_scene_splits(scenes, test_fraction, val_fraction, child_rng(seed, STREAM_SPLITS))
    except DatasetError as e:
        logger.warning("%s; every pair goes to train", e.msg)
        assignment = {s: "train" for s in scenes}
    for p in pairs:
        p["split"] = assignment[p["source_image"]]

    manifest = {
        "config": cfg.to_dict(),
        "seed": seed,
        "crop": crop,
        "max_crops": max_crops,
        "skipped": len(skipped),
        "split_counts": {s: sum(1 for p in pairs if p["split"] == s) for s in SPLITS},
        "pairs": pairs,
    }
    write_manifest(out_dir, manifest)
    tracing.emit("dataset_built", "acquisition.build_synthetic_dataset", config=cfg.config_id, pairs=len(pairs))
    return manifest


def alias_calibration(images: list[Raster], cfg: AcquisitionConfig) -> dict[str, float]:
    """Mean pre-decimation alias_energy_ratio per blur regime over a corpus."""
    out = {}
    for name, sigma in (("noalias", cfg.sigma_noalias), ("alias", cfg.sigma_alias)):
        kernel = gaussian_kernel(sigma)
        ratios = [alias_energy_ratio(blur(r.band(b), kernel)) for r in images for b in range(r.bands)]
        out[name] = float(np.mean(ratios)) if ratios else 0.0
    return out


def calibrate(hr_dir: str | Path, cfg: AcquisitionConfig) -> dict[str, float]:
    """alias_calibration over every readable HR image of a directory."""
    loaded, _ = ingest_directory(hr_dir)
    if not loaded:
        raise DatasetError("no readable HR images", hr_dir)
    result = alias_calibration([r for _, r in loaded], cfg)
    tracing.emit("alias_calibrated", "acquisition.calibrate", images=len(loaded), **result)
    return result
