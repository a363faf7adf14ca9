"""HR ground-truth ingestion: read -> validate -> trim -> (optionally) save as RAS1."""

from __future__ import annotations

import logging
from pathlib import Path

import tracing
from raster import Raster, load_any, write_raster
from validation import DataError, ShapeError, validate_raster

logger = logging.getLogger(__name__)

HR_SUFFIXES = (".png", ".ras")


def trim_to_even(r: Raster) -> Raster:
    """Drop the last row/column when a dimension is odd."""
    h, w = r.height - r.height % 2, r.width - r.width % 2
    if (h, w) == (r.height, r.width):
        return r
    if h == 0 or w == 0:
        raise ShapeError(f"raster {r.height}x{r.width} too small to trim to even size")
    tracing.emit("trimmed_to_even", "ingestion.trim_to_even", before=[r.height, r.width], after=[h, w])
    return r.window(0, 0, h, w)


def ingest_image(path: str | Path, *, trim_even: bool = True) -> Raster:
    """Load a PNG or RAS1 file onto the 12-bit scale, checked against pipeline invariants."""
    r = load_any(path)
    validate_raster(r, pipeline=True)
    if trim_even:
        r = trim_to_even(r)
    return r


def list_hr_files(hr_dir: str | Path) -> list[Path]:
    """HR candidates in a directory, sorted by name."""
    hr_dir = Path(hr_dir)
    if not hr_dir.is_dir():
        return []
    return sorted(p for p in hr_dir.iterdir() if p.is_file() and p.suffix.lower() in HR_SUFFIXES)


def ingest_directory(
    hr_dir: str | Path,
    out_dir: str | Path | None = None,
    *,
    dry_run: bool = False,
    trim_even: bool = True,
) -> tuple[list[tuple[Path, Raster]], list[Path]]:
    """Ingest every HR file. Unreadable files are skipped with a warning. Returns (loaded, skipped)."""
    loaded: list[tuple[Path, Raster]] = []
    skipped: list[Path] = []
    for path in list_hr_files(hr_dir):
        try:
            r = ingest_image(path, trim_even=trim_even)
        except DataError as e:
            logger.warning("skipping %s: %s", path.name, e.msg)
            tracing.emit("hr_skipped", "ingestion.ingest_directory", path=str(path), reason=e.msg)
            skipped.append(path)
            continue
        loaded.append((path, r))
        if out_dir is not None and not dry_run:
            write_raster(r, Path(out_dir) / f"{path.stem}.ras")
    tracing.emit("hr_ingested", "ingestion.ingest_directory", loaded=len(loaded), skipped=len(skipped))
    return loaded, skipped
