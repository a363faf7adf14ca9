"""Tests for the RRDB model: parameter layout, untrained behaviour, checkpoints."""

import json
import struct
import sys
from dataclasses import replace
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

import numpy as np
import pytest

from autograd import TensorNode, l1_loss, no_grad
from raster import make_rng
from signal_ops import bicubic_upsample2
from srnet import (
    CKPT_MAGIC,
    ModelSpec,
    checkpoint_hash,
    init_params,
    load_checkpoint,
    model_forward,
    param_count,
    param_shapes,
    save_checkpoint,
    spec_profile,
    zero_params,
)
from validation import RasterFormatError, ShapeError


def _run(spec, params, x):
    with no_grad():
        return model_forward(TensorNode(x), params.nodes(), spec).data


def test_param_count_matches_shapes(small_spec):
    params = init_params(small_spec, make_rng(0))
    assert params.count() == param_count(small_spec)
    assert params.names() == [name for name, _ in param_shapes(small_spec)]
    assert param_count(replace(small_spec, num_rrdb=2)) > param_count(small_spec)


def test_untrained_model_is_bicubic(small_spec):
    params = init_params(small_spec, make_rng(1))
    x = np.random.default_rng(0).random((2, 3, 6, 7)).astype(np.float32)
    out = _run(small_spec, params, x)
    assert out.shape == (2, 3, 12, 14)
    for n in range(2):
        assert np.allclose(out[n], bicubic_upsample2(x[n]), atol=1e-5)


def test_zero_residual_scale_makes_rrdb_identity():
    spec = ModelSpec(in_bands=1, features=4, num_rrdb=2, growth=2, residual_scale=0.0)
    rng = np.random.default_rng(2)
    params = init_params(spec, make_rng(2), dtype=np.float64)
    for name in params.names():
        params.tensors[name] = rng.normal(0.0, 0.3, size=params.tensors[name].shape)
    no_blocks = replace(spec, num_rrdb=0)
    kept = type(params)({k: v for k, v in params.tensors.items() if not k.startswith("rrdb")})
    x = rng.random((1, 1, 5, 5))
    assert np.allclose(_run(spec, params, x), _run(no_blocks, kept, x))


def test_single_band_model(small_spec):
    spec = replace(small_spec, in_bands=1)
    out = _run(spec, zero_params(spec), np.full((1, 1, 4, 4), 0.5, dtype=np.float32))
    assert out.shape == (1, 1, 8, 8)
    assert np.allclose(out, 0.5, atol=1e-6)


def test_forward_rejects_band_mismatch(small_spec):
    with pytest.raises(ShapeError):
        _run(small_spec, zero_params(small_spec), np.zeros((1, 1, 4, 4), dtype=np.float32))
    with pytest.raises(ShapeError):
        _run(small_spec, zero_params(small_spec), np.zeros((3, 4, 4), dtype=np.float32))


def test_checkpoint_round_trip(small_spec, tmp_path):
    params = init_params(small_spec, make_rng(3))
    params.tensors["tail2.w"] += 0.01
    save_checkpoint(tmp_path / "m.srw", small_spec, params, {"iteration": 7})
    spec, loaded, meta = load_checkpoint(tmp_path / "m.srw")
    assert spec == small_spec
    assert meta == {"iteration": 7}
    assert loaded.names() == params.names()
    for name in params.names():
        assert np.array_equal(loaded.tensors[name], params.tensors[name])


def test_checkpoint_hash_is_stable(small_spec, tmp_path):
    params = init_params(small_spec, make_rng(4))
    save_checkpoint(tmp_path / "a.srw", small_spec, params)
    save_checkpoint(tmp_path / "b.srw", small_spec, params.copy())
    assert checkpoint_hash(tmp_path / "a.srw") == checkpoint_hash(tmp_path / "b.srw")
    params.tensors["head.b"][0] = 1.0
    save_checkpoint(tmp_path / "c.srw", small_spec, params)
    assert checkpoint_hash(tmp_path / "c.srw") != checkpoint_hash(tmp_path / "a.srw")


def test_save_rejects_mismatched_params(small_spec, tmp_path):
    params = init_params(small_spec, make_rng(0))
    del params.tensors["head.b"]
    with pytest.raises(ShapeError):
        save_checkpoint(tmp_path / "x.srw", small_spec, params)


def test_load_rejects_corrupt_checkpoints(small_spec, tmp_path):
    save_checkpoint(tmp_path / "m.srw", small_spec, zero_params(small_spec))
    blob = (tmp_path / "m.srw").read_bytes()
    (tmp_path / "magic.srw").write_bytes(b"XXXX" + blob[4:])
    (tmp_path / "short.srw").write_bytes(blob[:-10])
    for name in ("magic.srw", "short.srw", "missing.srw"):
        with pytest.raises(RasterFormatError):
            load_checkpoint(tmp_path / name)


def test_profiles():
    tiny = spec_profile("tiny")
    assert (tiny.features, tiny.num_rrdb, tiny.growth) == (32, 4, 16)
    paper = spec_profile("paper", in_bands=1)
    assert (paper.features, paper.num_rrdb, paper.growth, paper.in_bands) == (64, 8, 32, 1)
    assert param_count(spec_profile("paper")) > param_count(tiny)
    with pytest.raises(ValueError):
        spec_profile("huge")


@pytest.mark.parametrize("kwargs", [{"in_bands": 2}, {"scale": 4}, {"features": 0}, {"num_rrdb": -1}])
def test_invalid_spec(kwargs):
    with pytest.raises(ValueError):
        ModelSpec(**kwargs)


@pytest.mark.parametrize(
    "header",
    [{"meta": {}}, {"spec": {"bogus": 1}}, {"spec": {"in_bands": 2}}, ["spec"], {"spec": None}],
)
def test_load_rejects_malformed_headers(header, tmp_path):
    raw = json.dumps(header).encode()
    (tmp_path / "h.srw").write_bytes(CKPT_MAGIC + struct.pack("<I", len(raw)) + raw + struct.pack("<I", 0))
    with pytest.raises(RasterFormatError, match="bad checkpoint header"):
        load_checkpoint(tmp_path / "h.srw")


def _random_params(spec, seed):
    rng = np.random.default_rng(seed)
    params = init_params(spec, make_rng(seed), dtype=np.float64)
    for name in params.names():
        params.tensors[name] = rng.normal(0.0, 0.1, size=params.tensors[name].shape)
    return params


def test_batch_permutation_permutes_predictions(small_spec):
    params = _random_params(small_spec, 5)
    x = np.random.default_rng(6).random((4, 3, 6, 6))
    perm = [2, 0, 3, 1]
    assert np.allclose(_run(small_spec, params, x[perm]), _run(small_spec, params, x)[perm], atol=1e-6)


def test_batch_loss_is_mean_of_sample_losses(small_spec):
    params = _random_params(small_spec, 7)
    rng = np.random.default_rng(8)
    x, target = rng.random((3, 3, 5, 5)), rng.random((3, 3, 10, 10))
    with no_grad():
        batch = l1_loss(model_forward(TensorNode(x), params.nodes(), small_spec), TensorNode(target)).data
        single = [
            l1_loss(model_forward(TensorNode(x[n : n + 1]), params.nodes(), small_spec), TensorNode(target[n : n + 1])).data
            for n in range(3)
        ]
    assert float(batch) == pytest.approx(float(np.mean(single)), abs=1e-6)


def test_shifting_input_one_px_shifts_prediction_two_px(small_spec):
    params = _random_params(small_spec, 9)
    x = np.random.default_rng(10).random((1, 3, 6, 64))
    moved = np.roll(x, 1, axis=3)
    out, out_moved = _run(small_spec, params, x), _run(small_spec, params, moved)
    # columns whose receptive field avoids both borders and the wrapped column
    assert np.allclose(out_moved[..., 46:84], out[..., 44:82], atol=1e-3)
