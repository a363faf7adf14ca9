"""Render EvalReports as a CSV table, a fixed-width PSNR table and LR | SR | HR panels."""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np

from analysis.run_manifest import SPLITS
from eval.scoring import EvalReport, format_db
from raster import PEAK, Raster, load_any, write_png
from validation import DatasetError, ShapeError

logger = logging.getLogger(__name__)

CSV_NAME = "psnr.csv"
TABLE_NAME = "table1.txt"
PANEL_MARGIN = 4

_ALIAS_LABEL = {"alias": "alias", "noalias": "no alias"}
_SHIFT_LABEL = {"none": "no shift", "fixed": "fixed shift", "random": "random shift"}


def row_label(config_id: str) -> tuple[str, str]:
    """'alias:fixed' -> ('alias', 'fixed shift'); other ids pass through."""
    alias, _, mode = config_id.partition(":")
    if alias in _ALIAS_LABEL and mode in _SHIFT_LABEL:
        return _ALIAS_LABEL[alias], _SHIFT_LABEL[mode]
    return config_id, ""


def write_csv(reports: list[EvalReport], path: Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["config", *SPLITS])
        for r in reports:
            w.writerow([r.config, *(repr(r.split_psnr(s)) for s in SPLITS)])


def format_table1(reports: list[EvalReport]) -> str:
    """Fixed-width table: one row per report, PSNR columns Test, Train, Val; best test PSNR marked with '*'."""
    cols = ("test", "train", "val")
    best = max((r.split_psnr("test") for r in reports), key=lambda v: -np.inf if np.isnan(v) else v)
    lines = [f"{'PSNR (dB)':<26}{'Test':>9}{'Train':>9}{'Val':>9}"]
    prev_group = None
    for r in reports:
        group, variant = row_label(r.config)
        label = f"{group if group != prev_group else '':<10}{variant:<16}"
        prev_group = group
        cells = []
        for c in cols:
            v = r.split_psnr(c)
            mark = "*" if c == "test" and v == best and not np.isnan(v) else " "
            cells.append(f"{format_db(v) + mark:>9}")
        lines.append(label + "".join(cells))
    return "\n".join(lines) + "\n"


def triptych(lr: Raster, sr: Raster, hr: Raster, margin: int = PANEL_MARGIN) -> Raster:
    """LR (nearest x2) | SR | HR side by side on a white background; (2H) x (3*2W + 2*margin)."""
    if sr.shape != hr.shape or lr.bands != hr.bands:
        raise ShapeError(f"panel inputs disagree: LR {lr.shape}, SR {sr.shape}, HR {hr.shape}")
    if hr.height != 2 * lr.height or hr.width != 2 * lr.width:
        raise ShapeError(f"HR {hr.shape} is not 2x LR {lr.shape}")
    c, h2, w2 = hr.shape
    canvas = np.full((c, h2, 3 * w2 + 2 * margin), PEAK, dtype=np.float32)
    up = lr.data.repeat(2, axis=1).repeat(2, axis=2)
    for k, panel in enumerate((up, sr.data, hr.data)):
        x0 = k * (w2 + margin)
        canvas[:, :, x0 : x0 + w2] = panel
    return Raster(np.clip(canvas, 0.0, PEAK))


def render_report(reports: list[EvalReport], out_dir: str | Path) -> list[Path]:
    """Write psnr.csv, table1.txt and one PNG panel per sample. Returns the written paths."""
    if not reports:
        raise DatasetError("no reports to render")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [out_dir / CSV_NAME, out_dir / TABLE_NAME]
    write_csv(reports, written[0])
    written[1].write_text(format_table1(reports))

    for r in reports:
        for k, s in enumerate(r.samples):
            lr, sr, hr = (load_any(s[key]) for key in ("lr_path", "sr_path", "hr_path"))
            if lr.bands not in (1, 3):
                logger.warning("skipping panel for %s: %d bands", s["lr_path"], lr.bands)
                continue
            path = out_dir / "panels" / f"{r.config.replace(':', '_')}_{k:02d}.png"
            write_png(triptych(lr, sr, hr), path)
            written.append(path)
    logger.info("rendered %d report(s) into %s", len(reports), out_dir)
    return written
