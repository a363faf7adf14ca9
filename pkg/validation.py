"""Error types and invariant checks shared by every pipeline stage."""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

if TYPE_CHECKING:
    from raster import Raster

PIPELINE_BANDS = (1, 3)


class DataError(Exception):
    """Base for input/data errors. CLI exit code 2."""

    def __init__(self, msg: str, path: str | Path | None = None):
        super().__init__(msg if path is None else f"{msg} ({path})")
        self.msg = msg
        self.path = path


class RasterFormatError(DataError):
    """File does not follow the RAS1/SRW1/PNG contract."""


class ShapeError(DataError):
    """Dimensions, band counts or tensor shapes disagree."""


class DatasetError(DataError):
    """Corpus, manifest or split cannot be built or used."""


class RegistrationError(DataError):
    """Registration inputs are degenerate."""


class TrainingDivergedError(Exception):
    """Loss became NaN or infinite. CLI exit code 3."""

    def __init__(self, msg: str, iteration: int | None = None):
        super().__init__(msg)
        self.msg = msg
        self.iteration = iteration


def validate_raster(r: Raster, *, pipeline: bool = False) -> None:
    """Raise if raster invariants do not hold. pipeline=True also enforces bands in {1, 3}."""
    expected = r.bands * r.height * r.width
    if r.data.size != expected:
        raise ShapeError(f"data length {r.data.size} != {r.bands}x{r.height}x{r.width}")
    if not np.isfinite(r.data).all():
        raise DataError("raster contains NaN or Inf")
    if pipeline and r.bands not in PIPELINE_BANDS:
        raise ShapeError(f"pipeline rasters need 1 or 3 bands, got {r.bands}")


def require_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape {a.shape} != {b.shape}")


def validate_records(
    records: list[dict[str, Any]],
    *,
    required: list[str] | None = None,
    types: dict[str, type] | None = None,
    source: str | Path | None = None,
) -> None:
    """Validate parsed records (pairing lists, manifests). Raises DatasetError on the first bad record."""
    required = required or []
    types = types or {}

    for i, rec in enumerate(records):
        if not isinstance(rec, dict):
            raise DatasetError(f"record {i}: expected an object, got {type(rec).__name__}", source)
        for field in required:
            if field not in rec:
                raise DatasetError(f"record {i}: missing required field: {field}", source)
            if rec[field] is None or rec[field] == "":
                raise DatasetError(f"record {i}: required field {field} is empty", source)
        for field, expected in types.items():
            if field in rec and not isinstance(rec[field], expected):
                raise DatasetError(
                    f"record {i}: {field} must be {expected.__name__}, got {type(rec[field]).__name__}", source
                )
