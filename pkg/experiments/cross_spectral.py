#!/usr/bin/env python3
"""Joint RGB model vs an ensemble of three single-band models trained with the same budget."""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

import tracing  # noqa: E402
from analysis.run_manifest import load_manifest, load_pair, pairs_in_split  # noqa: E402
from eval.run_eval import DEFAULT_TILE, MIN_OVERLAP, Model, infer, load_model, score_pairs  # noqa: E402
from eval.scoring import SplitScores, encode_db  # noqa: E402
from raster import Raster  # noqa: E402
from srnet import ModelSpec  # noqa: E402
from training import TrainConfig, train  # noqa: E402
from validation import DatasetError, ShapeError, TrainingDivergedError  # noqa: E402

logger = logging.getLogger(__name__)

REPORT_NAME = "xspectral.json"


def ensemble_predict(models: list[Model], lr: Raster, tile: int = DEFAULT_TILE, overlap: int = MIN_OVERLAP) -> Raster:
    """Band b of the output comes from models[b] run on band b of the input."""
    if len(models) != lr.bands:
        raise ShapeError(f"{len(models)} single-band models for a {lr.bands}-band scene")
    return Raster(np.concatenate([infer(m, lr.select([b]), tile, overlap).data for b, m in enumerate(models)]))


@dataclass
class CrossSpectralReport:
    split: str
    joint: SplitScores
    ensemble: SplitScores
    per_band_psnr: list[float]

    @property
    def gap(self) -> float:
        """joint - ensemble test PSNR; positive when joint training wins."""
        return self.joint.mean_psnr - self.ensemble.mean_psnr

    def to_dict(self) -> dict[str, Any]:
        return {
            "split": self.split,
            "joint_psnr": encode_db(self.joint.mean_psnr),
            "ensemble_psnr": encode_db(self.ensemble.mean_psnr),
            "bicubic_psnr": encode_db(self.joint.bicubic_psnr),
            "gap_db": encode_db(self.gap),
            "per_band_ensemble_psnr": [encode_db(v) for v in self.per_band_psnr],
            "pairs": [
                {"lr_path": j["lr_path"], "joint_psnr": encode_db(j["psnr"]), "ensemble_psnr": encode_db(e["psnr"])}
                for j, e in zip(self.joint.pairs, self.ensemble.pairs)
            ],
        }

    def write(self, out_dir: str | Path) -> Path:
        path = Path(out_dir) / REPORT_NAME
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")
        return path


def _band_psnr(models: list[Model], manifest: dict[str, Any], split: str, tile: int, overlap: int) -> list[float]:
    """Mean PSNR of each single-band model on its own band."""
    out = []
    for b, m in enumerate(models):
        rows, _ = score_pairs(lambda lr, m=m: infer(m, lr, tile, overlap), manifest, split, bands=[b])
        out.append(SplitScores.from_pairs(rows).mean_psnr)
    return out


def run_cross_spectral_experiment(
    manifest: str | Path,
    out_dir: str | Path,
    *,
    spec: ModelSpec | None = None,
    train_cfg: TrainConfig | None = None,
    split: str = "test",
    tile: int = DEFAULT_TILE,
    overlap: int = MIN_OVERLAP,
) -> CrossSpectralReport:
    out_dir = Path(out_dir)
    m = load_manifest(manifest)
    pairs = pairs_in_split(m, split)
    if not pairs:
        raise DatasetError(f"no pairs in split {split!r}", manifest)
    bands = load_pair(m, pairs[0])[0].bands
    if bands != 3:
        raise ShapeError(f"cross-spectral comparison needs a 3-band dataset, got {bands}")
    spec = replace(spec or ModelSpec(), in_bands=3)
    train_cfg = train_cfg or TrainConfig()

    def fit(name: str, model_spec: ModelSpec, band: int | None) -> Model:
        logger.info("training %s model (%d iterations)", name, train_cfg.iterations)
        try:
            train(m, model_spec, train_cfg, out_dir / name, bands=None if band is None else [band])
        except TrainingDivergedError as e:
            raise TrainingDivergedError(f"{name}: {e.msg}", iteration=e.iteration) from e
        return load_model(out_dir / name / "model.srw")

    joint = fit("joint", spec, None)
    singles = [fit(f"band{b}", replace(spec, in_bands=1), b) for b in range(3)]

    joint_rows, _ = score_pairs(lambda lr: infer(joint, lr, tile, overlap), m, split)
    ens_rows, _ = score_pairs(lambda lr: ensemble_predict(singles, lr, tile, overlap), m, split)
    report = CrossSpectralReport(
        split,
        SplitScores.from_pairs(joint_rows),
        SplitScores.from_pairs(ens_rows),
        _band_psnr(singles, m, split, tile, overlap),
    )
    report.write(out_dir)
    tracing.emit(
        "xspectral_done",
        "cross_spectral.run_cross_spectral_experiment",
        joint=report.joint.mean_psnr,
        ensemble=report.ensemble.mean_psnr,
        gap=report.gap,
    )
    if report.gap <= 0:
        logger.warning("joint model does not beat the per-band ensemble (gap %.3f dB)", report.gap)
    return report


def main() -> None:
    import argparse

    parser = argparse.ArgumentParser(description="Joint RGB vs per-band ensemble")
    parser.add_argument("manifest")
    parser.add_argument("out")
    parser.add_argument("--iters", type=int, default=3000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(levelname)s - %(message)s")
    tracing.init(Path(args.out))
    report = run_cross_spectral_experiment(
        args.manifest, args.out, train_cfg=TrainConfig(iterations=args.iters, seed=args.seed)
    )
    print(f"  joint {report.joint.mean_psnr:.2f} dB, ensemble {report.ensemble.mean_psnr:.2f} dB, gap {report.gap:.2f} dB")


if __name__ == "__main__":
    main()
