"""Tests for equalization, phase correlation, registration, filtering, splits and run_pairing."""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

import numpy as np
import pytest

from conftest import smooth_texture
from pairing import (
    EqualizationCoeffs,
    PairingConfig,
    PairRecord,
    RegistrationResult,
    assemble_splits,
    assign_scene_splits,
    equalize,
    filter_pairs,
    phase_correlate,
    register_pair,
    registration_view,
    run_pairing,
)
from raster import Raster, make_rng, write_raster
from signal_ops import blur, decimate2, gaussian_kernel, shift_integer, spline_shift
from validation import DatasetError, RegistrationError, ShapeError


def _record(score, scene="s"):
    return PairRecord("lr", "hr", RegistrationResult(0.0, 0.0, score), EqualizationCoeffs((1.0,), (0.0,)), scene)


def test_phase_correlate_self():
    x = smooth_texture(np.random.default_rng(0), (32, 32))
    r = phase_correlate(x, x)
    assert r.dr == pytest.approx(0.0, abs=1e-9)
    assert r.dc == pytest.approx(0.0, abs=1e-9)
    assert r.score == pytest.approx(1.0, abs=1e-3)


def test_phase_correlate_integer_shift():
    x = smooth_texture(np.random.default_rng(1), (64, 64), sigma=1.0)
    r = phase_correlate(x, np.roll(x, (3, -2), axis=(0, 1)))
    assert r.dr == pytest.approx(3.0, abs=0.15)
    assert r.dc == pytest.approx(-2.0, abs=0.15)
    assert r.score > 0.55


def test_phase_correlate_subpixel_accuracy():
    rng = np.random.default_rng(2)
    errors = {"parabolic": [], "sinc": []}
    for _ in range(200):
        big = smooth_texture(rng, (96, 96), sigma=1.0)
        dr, dc = rng.uniform(-2, 2, size=2)
        moved = spline_shift(big, dr, dc)
        for method, errs in errors.items():
            r = phase_correlate(big[16:80, 16:80], moved[16:80, 16:80], subpixel=method)
            errs += [abs(r.dr - dr), abs(r.dc - dc)]
    for errs in errors.values():
        assert np.median(errs) < 0.15
        assert np.max(errs) < 0.5


def test_phase_correlate_defaults_to_parabolic_fit():
    x = smooth_texture(np.random.default_rng(8), (64, 64), sigma=1.0)
    moved = spline_shift(x, 0.3, -0.6)
    assert phase_correlate(x, moved) == phase_correlate(x, moved, subpixel="parabolic")
    with pytest.raises(ValueError):
        phase_correlate(x, moved, subpixel="gaussian")


def test_phase_correlate_null_score_on_white_noise():
    rng = np.random.default_rng(9)
    scores = [phase_correlate(rng.random((64, 64)), rng.random((64, 64))).score for _ in range(100)]
    assert max(scores) < 0.2


def test_phase_correlate_errors():
    with pytest.raises(RegistrationError):
        phase_correlate(np.ones((8, 8)), np.random.default_rng(0).random((8, 8)))
    with pytest.raises(ShapeError):
        phase_correlate(np.zeros((8, 8)), np.zeros((8, 9)))


def test_equalize_matches_statistics():
    rng = np.random.default_rng(3)
    src = Raster(rng.random((3, 16, 16)) * 1000)
    ref = Raster(rng.random((3, 16, 16)) * 200 + 1500)
    out, coeffs = equalize(src, ref)
    for b in range(3):
        assert out.band(b).mean() == pytest.approx(ref.band(b).mean(), rel=1e-4)
        assert out.band(b).std() == pytest.approx(ref.band(b).std(), rel=1e-3)
    assert len(coeffs.gains) == 3


def test_equalize_constant_source_keeps_unit_gain():
    out, coeffs = equalize(Raster(np.full((1, 4, 4), 10.0)), Raster(np.arange(16.0).reshape(1, 4, 4)))
    assert coeffs.gains == (1.0,)
    assert np.allclose(out.data, 7.5)


def test_register_pair_recovers_lr_grid_offset():
    rng = np.random.default_rng(4)
    hr = Raster(np.stack([smooth_texture(rng, (64, 64)) for _ in range(3)]))
    k = gaussian_kernel(1.0)
    lr = Raster(np.stack([decimate2(blur(shift_integer(hr.band(b), 2, -2), k)) for b in range(3)]))
    registered, result = register_pair(lr, hr)
    assert result.dr == pytest.approx(-1.0, abs=0.2)
    assert result.dc == pytest.approx(1.0, abs=0.2)
    assert result.score > 0.55
    diff = np.abs(registration_view(registered) - lr.band(0))[4:-4, 4:-4]
    assert diff.mean() < 0.15 * lr.band(0).std()


def test_register_pair_shape_errors():
    with pytest.raises(ShapeError):
        register_pair(Raster(np.zeros((3, 8, 8))), Raster(np.zeros((3, 15, 16))))


def test_filter_pairs_threshold_is_inclusive():
    kept, rejected = filter_pairs([_record(0.55), _record(0.5499), _record(0.9)])
    assert [r.score for r in kept] == [0.55, 0.9]
    assert [r.score for r in rejected] == [0.5499]


def test_splits_are_scene_disjoint_and_deterministic():
    scenes = [f"s{i}" for i in range(10)]
    a = assign_scene_splits(scenes, 0.2, 0.1, make_rng(0))
    assert a == assign_scene_splits(scenes, 0.2, 0.1, make_rng(0))
    assert sorted(a.values()).count("test") == 2
    assert sorted(a.values()).count("val") == 1
    records = [_record(1.0, scene=f"s{i % 4}") for i in range(12)]
    splits = assemble_splits(records, 0.25, 0.25, make_rng(1))
    by_scene = {}
    for r, s in zip(records, splits):
        assert by_scene.setdefault(r.scene_id, s) == s


def test_infeasible_split():
    with pytest.raises(DatasetError):
        assign_scene_splits(["a", "b"], 0.2, 0.1, make_rng(0))


def test_run_pairing_end_to_end(tmp_path):
    rng = np.random.default_rng(5)
    k = gaussian_kernel(1.0)
    entries = []
    for i in range(5):
        hr = np.stack([smooth_texture(rng, (64, 64)) for _ in range(3)])
        if i == 4:
            lr = np.stack([smooth_texture(rng, (32, 32), sigma=0.5) for _ in range(3)])
        else:
            lr = np.stack([decimate2(blur(b, k)) for b in hr]) * 0.8 + 100
        write_raster(Raster(hr), tmp_path / "src" / f"hr{i}.ras")
        write_raster(Raster(lr), tmp_path / "src" / f"lr{i}.ras")
        entries.append({"lr_path": f"lr{i}.ras", "hr_path": f"hr{i}.ras", "scene_id": f"scene{i}"})
    (tmp_path / "src" / "pairs.json").write_text(json.dumps(entries))

    m = run_pairing(tmp_path / "src" / "pairs.json", tmp_path / "out", PairingConfig(crop=16, max_crops=2, seed=1))
    assert m["kept"] == 4
    assert len(m["rejected"]) == 1
    assert m["rejected"][0]["lr_path"].endswith("lr4.ras")
    assert len(m["pairs"]) == 8
    assert {p["source_image"] for p in m["pairs"]} == {"scene0", "scene1", "scene2", "scene3"}
    assert sum(m["split_counts"].values()) == 8
    assert all(p["score"] >= 0.55 for p in m["pairs"])
    assert (tmp_path / "out" / "manifest.json").exists()
    assert (tmp_path / "out" / m["pairs"][0]["lr_path"]).exists()


def test_dated_scenes_split_by_acquisition_date():
    scenes = [f"s{i}" for i in range(10)]
    dates = {s: f"2021-0{1 + i // 2}-15" for i, s in enumerate(scenes)}
    a = assign_scene_splits(scenes, 0.2, 0.1, make_rng(3), dates)
    assert a == assign_scene_splits(scenes, 0.2, 0.1, make_rng(3), dates)
    train_dates = {dates[s] for s, split in a.items() if split == "train"}
    held_out = {dates[s] for s, split in a.items() if split != "train"}
    assert train_dates and not train_dates & held_out
    assert {"test", "val"} <= set(a.values())


def test_dated_split_needs_enough_dates():
    scenes = ["a", "b", "c", "d"]
    with pytest.raises(DatasetError):
        assign_scene_splits(scenes, 0.25, 0.25, make_rng(0), {s: "2020-01-01" for s in scenes})
    partial = {"a": "2020-01-01"}
    assert len(assign_scene_splits(scenes, 0.25, 0.25, make_rng(0), partial)) == 4


def test_assemble_splits_uses_record_dates():
    records = [
        PairRecord("lr", "hr", RegistrationResult(0.0, 0.0, 1.0), EqualizationCoeffs((1.0,), (0.0,)), f"s{i % 6}", f"d{i % 3}")
        for i in range(18)
    ]
    assemble_splits(records, 0.2, 0.2, make_rng(2))
    by_date = {}
    for r in records:
        by_date.setdefault(r.date, set()).add(r.split)
    assert all(len(splits) == 1 for splits in by_date.values())
    assert {s for splits in by_date.values() for s in splits} == {"train", "val", "test"}


def test_equalize_is_idempotent():
    rng = np.random.default_rng(10)
    src = Raster(rng.random((3, 12, 12)) * 900 + 50)
    ref = Raster(rng.random((3, 12, 12)) * 300 + 2000)
    once, _ = equalize(src, ref)
    twice, coeffs = equalize(once, ref)
    assert np.allclose(twice.data, once.data, atol=1e-4)
    assert coeffs.gains == pytest.approx((1.0, 1.0, 1.0))


def test_raising_threshold_never_keeps_more():
    scores = np.random.default_rng(11).random(40)
    records = [_record(float(s)) for s in scores]
    kept = [len(filter_pairs(records, t)[0]) for t in np.linspace(0.0, 1.0, 21)]
    assert all(b <= a for a, b in zip(kept, kept[1:]))
    assert kept[0] == 40


def test_filter_pairs_empty_input():
    assert filter_pairs([]) == ([], [])
