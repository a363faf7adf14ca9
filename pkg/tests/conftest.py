"""Pytest fixtures: small HR corpora, a small model spec, one-pair manifests."""

import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

from acquisition import AcquisitionConfig, build_synthetic_dataset  # noqa: E402
from analysis.run_manifest import write_manifest  # noqa: E402
from raster import Raster, write_raster  # noqa: E402
from signal_ops import blur, gaussian_kernel  # noqa: E402
from srnet import ModelSpec  # noqa: E402


def smooth_texture(rng: np.random.Generator, shape: tuple, sigma: float = 2.0, peak: float = 4095.0) -> np.ndarray:
    """Blurred white noise rescaled to [0.1, 0.9] * peak."""
    x = blur(rng.random(shape), gaussian_kernel(sigma))
    x = (x - x.min()) / (x.max() - x.min())
    return (0.1 + 0.8 * x) * peak


def write_corpus(directory: Path, n: int = 5, size: int = 48, bands: int = 3, seed: int = 0) -> Path:
    """n blocky RGB (or grayscale) 8-bit PNGs."""
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(n):
        base = rng.random((size // 4, size // 4, bands))
        img = np.kron(base, np.ones((4, 4, 1)))
        arr = np.clip(img * 255, 0, 255).astype(np.uint8)
        Image.fromarray(arr[..., 0] if bands == 1 else arr).save(directory / f"img_{i:02d}.png")
    return directory


@pytest.fixture
def golden_dir():
    """Path to golden output files."""
    return Path(__file__).parent / "golden"


@pytest.fixture
def hr_corpus(tmp_path):
    return write_corpus(tmp_path / "hr")


@pytest.fixture
def small_spec():
    return ModelSpec(in_bands=3, features=8, num_rrdb=1, growth=4)


@pytest.fixture
def synthetic_dataset(hr_corpus, tmp_path):
    """noalias:none dataset of 8x8 LR crops, 2 per image. Returns the dataset directory."""
    out = tmp_path / "data"
    build_synthetic_dataset(hr_corpus, AcquisitionConfig(False, "none"), out, crop=8, max_crops=2, seed=3)
    return out


@pytest.fixture
def single_pair(tmp_path):
    """Manifest with one 8x8 LR / 16x16 HR train pair built from a smooth texture."""
    rng = np.random.default_rng(7)
    hr = smooth_texture(rng, (16, 16), sigma=1.5)
    hr = np.stack([hr, np.roll(hr, 1, axis=0), np.roll(hr, 1, axis=1)])
    lr = hr.reshape(3, 8, 2, 8, 2).mean(axis=(2, 4))
    out = tmp_path / "one"
    write_raster(Raster(lr), out / "lr" / "p.ras")
    write_raster(Raster(hr), out / "hr" / "p.ras")
    pair = {"lr_path": "lr/p.ras", "hr_path": "hr/p.ras", "source_image": "p", "split": "train"}
    write_manifest(out, {"config": {"id": "single"}, "seed": 0, "pairs": [pair]})
    return out
