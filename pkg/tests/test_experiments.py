"""Tests for the acquisition grid experiment and the joint vs per-band comparison."""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

import numpy as np
import pytest

from analysis.run_manifest import write_manifest
from experiments.alias_shift_table import check_table1_ordering, read_grid, run_table1_experiment
from experiments.cross_spectral import REPORT_NAME, ensemble_predict, run_cross_spectral_experiment
from raster import Raster, make_rng, write_raster
from srnet import ModelSpec, init_params
from training import TrainConfig
from validation import ShapeError

REFERENCE = {
    "noalias:none": 46.69,
    "noalias:fixed": 47.20,
    "noalias:random": 46.90,
    "alias:none": 46.67,
    "alias:fixed": 49.30,
    "alias:random": 48.12,
}


def test_ordering_holds_for_reference_numbers():
    assert check_table1_ordering(REFERENCE) == []


def test_ordering_flags_weak_random_shift():
    violations = check_table1_ordering({**REFERENCE, "alias:random": 47.3})
    assert len(violations) == 1
    assert violations[0].startswith("alias:random")


def test_ordering_flags_fixed_below_random():
    violations = check_table1_ordering({**REFERENCE, "alias:fixed": 48.0, "alias:random": 48.2})
    assert any(v.startswith("alias:fixed 48.00 < alias:random") for v in violations)


def test_ordering_flags_alias_none_outside_band():
    assert len(check_table1_ordering({**REFERENCE, "alias:none": 45.5})) == 1


def test_ordering_reports_missing_cells():
    partial = {k: v for k, v in REFERENCE.items() if k != "noalias:fixed"}
    assert check_table1_ordering(partial) == ["missing test PSNR for noalias:fixed"]


def test_untrained_grid_matches_bicubic(hr_corpus, small_spec, tmp_path):
    grid = run_table1_experiment(
        hr_corpus, tmp_path / "grid", spec=small_spec, train_cfg=TrainConfig(iterations=0), crop=8, max_crops=2, seed=3
    )
    rows = grid.rows()
    assert [r["config"] for r in rows] == list(REFERENCE)
    for row in rows:
        for split in ("train", "val", "test"):
            assert row[split] == pytest.approx(row[f"bicubic_{split}"], abs=1e-3)
    assert (tmp_path / "grid" / "alias_fixed" / "report.json").exists()
    assert (tmp_path / "grid" / "alias_fixed" / "samples" / "train_sr_00.ras").exists()

    saved = json.loads((tmp_path / "grid" / "grid.json").read_text())
    assert saved["train"]["iterations"] == 0
    back = read_grid(tmp_path / "grid")
    assert back.psnr_table("test") == grid.psnr_table("test")
    assert back.spec == small_spec


def _zero_model(spec, seed=0):
    return spec, init_params(spec, make_rng(seed))


def test_ensemble_predict_stacks_bands():
    single = ModelSpec(in_bands=1, features=4, num_rrdb=1, growth=2)
    models = [_zero_model(single, b) for b in range(3)]
    lr = Raster(np.random.default_rng(0).random((3, 8, 8)) * 4000)
    assert ensemble_predict(models, lr).shape == (3, 16, 16)
    with pytest.raises(ShapeError):
        ensemble_predict(models[:2], lr)


def test_untrained_joint_and_ensemble_tie(synthetic_dataset, small_spec, tmp_path):
    report = run_cross_spectral_experiment(
        synthetic_dataset, tmp_path / "xs", spec=small_spec, train_cfg=TrainConfig(iterations=0)
    )
    assert report.gap == pytest.approx(0.0, abs=1e-3)
    assert len(report.per_band_psnr) == 3
    assert len(report.joint.pairs) == 2
    saved = json.loads((tmp_path / "xs" / REPORT_NAME).read_text())
    assert saved["split"] == "test"
    for name in ("joint", "band0", "band1", "band2"):
        assert (tmp_path / "xs" / name / "model.srw").exists()


def test_cross_spectral_needs_three_bands(small_spec, tmp_path):
    rng = np.random.default_rng(0)
    write_raster(Raster(rng.random((1, 8, 8)) * 4000), tmp_path / "d" / "lr" / "a.ras")
    write_raster(Raster(rng.random((1, 16, 16)) * 4000), tmp_path / "d" / "hr" / "a.ras")
    pair = {"lr_path": "lr/a.ras", "hr_path": "hr/a.ras", "source_image": "a", "split": "test"}
    write_manifest(tmp_path / "d", {"config": {"id": "gray"}, "seed": 0, "pairs": [pair]})
    with pytest.raises(ShapeError):
        run_cross_spectral_experiment(tmp_path / "d", tmp_path / "xs", spec=small_spec, train_cfg=TrainConfig(iterations=0))
