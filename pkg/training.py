"""L1 training loop with Adam for the RRDB model."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

import tracing
from analysis.run_manifest import load_manifest, load_pair, pairs_in_split
from autograd import TensorNode, l1_loss
from parsers import format_loss_csv
from raster import PEAK, STREAM_BATCHES, child_rng, make_rng
from srnet import ModelParams, ModelSpec, init_params, model_forward, save_checkpoint
from validation import DatasetError, ShapeError, TrainingDivergedError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 4
    iterations: int = 1000
    seed: int = 0
    crop_size: int = 32
    loss: str = "l1"
    checkpoint_every: int = 0
    log_every: int = 50

    def __post_init__(self) -> None:
        if self.loss != "l1":
            raise ValueError(f"only the L1 loss is supported, got {self.loss!r}")
        if self.lr < 0 or self.batch_size < 1 or self.iterations < 0 or self.crop_size < 1:
            raise ValueError("invalid training configuration")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> TrainConfig:
        return cls(**d)


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: ModelParams, grads: dict[str, np.ndarray], state: AdamState, cfg: TrainConfig
) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update, in place on params."""
    state.step += 1
    t = state.step
    for name, p in params.tensors.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise ShapeError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        if m.shape != p.shape or v.shape != p.shape:
            raise ShapeError(f"{name}: optimizer state does not match parameter shape {p.shape}")
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        m_hat = m / (1.0 - cfg.beta1**t)
        v_hat = v / (1.0 - cfg.beta2**t)
        p -= (cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)).astype(p.dtype)
    return params, state


@dataclass
class TrainingSet:
    """Normalized [0, 1] LR/HR arrays, one (bands, h, w) pair per manifest entry."""

    lr: list[np.ndarray]
    hr: list[np.ndarray]

    def __len__(self) -> int:
        return len(self.lr)


def load_training_set(
    manifest: dict[str, Any] | str | Path, split: str = "train", bands: Sequence[int] | None = None
) -> TrainingSet:
    m = manifest if isinstance(manifest, dict) else load_manifest(manifest)
    pairs = pairs_in_split(m, split)
    if not pairs:
        raise DatasetError(f"no pairs in split {split!r}")
    lrs, hrs = [], []
    for pair in pairs:
        lr, hr = load_pair(m, pair)
        if hr.height != 2 * lr.height or hr.width != 2 * lr.width or hr.bands != lr.bands:
            raise ShapeError(f"pair {pair['lr_path']}: HR {hr.shape} is not 2x LR {lr.shape}")
        sel = list(bands) if bands is not None else list(range(lr.bands))
        lrs.append((lr.data[sel] / PEAK).astype(np.float32))
        hrs.append((hr.data[sel] / PEAK).astype(np.float32))
    return TrainingSet(lrs, hrs)


def sample_batch(data: TrainingSet, crop: int, batch_size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    lr_batch, hr_batch = [], []
    for _ in range(batch_size):
        k = int(rng.integers(len(data)))
        lr, hr = data.lr[k], data.hr[k]
        r = int(rng.integers(lr.shape[1] - crop + 1))
        c = int(rng.integers(lr.shape[2] - crop + 1))
        lr_batch.append(lr[:, r : r + crop, c : c + crop])
        hr_batch.append(hr[:, 2 * r : 2 * (r + crop), 2 * c : 2 * (c + crop)])
    return np.stack(lr_batch), np.stack(hr_batch)


@dataclass
class TrainResult:
    params: ModelParams
    history: list[tuple[int, float]]
    spec: ModelSpec


def train(
    manifest: dict[str, Any] | str | Path,
    spec: ModelSpec,
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
    *,
    bands: Sequence[int] | None = None,
    params: ModelParams | None = None,
) -> TrainResult:
    """Minimize L1 over seeded random crops of the train split. Deterministic per cfg.seed."""
    data = load_training_set(manifest, "train", bands)
    n_bands = data.lr[0].shape[0]
    if n_bands != spec.in_bands:
        raise ShapeError(f"model expects {spec.in_bands} band(s), dataset provides {n_bands}")
    crop = min(cfg.crop_size, *(x.shape[1] for x in data.lr), *(x.shape[2] for x in data.lr))

    params = params.copy() if params is not None else init_params(spec, make_rng(cfg.seed))
    state = AdamState()
    rng = child_rng(cfg.seed, STREAM_BATCHES)
    history: list[tuple[int, float]] = []
    out = Path(out_dir) if out_dir is not None else None
    meta = {"train": cfg.to_dict(), "bands": list(bands) if bands is not None else None}

    tracing.emit("training_started", "training.train", spec=spec.to_dict(), config=cfg.to_dict(), pairs=len(data))
    for it in range(1, cfg.iterations + 1):
        lr_b, hr_b = sample_batch(data, crop, cfg.batch_size, rng)
        nodes = params.nodes(requires_grad=True)
        pred = model_forward(TensorNode(lr_b), nodes, spec)
        loss = l1_loss(pred, TensorNode(hr_b))
        value = loss.item()
        if not math.isfinite(value):
            tracing.emit("training_diverged", "training.train", iteration=it, loss=str(value))
            raise TrainingDivergedError(f"loss became {value} at iteration {it}", iteration=it)
        loss.backward()
        adam_step(params, {k: n.grad for k, n in nodes.items()}, state, cfg)
        history.append((it, value))
        if cfg.log_every and it % cfg.log_every == 0:
            logger.info("iter %d loss %.6f", it, value)
        if out is not None and cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
            save_checkpoint(out / f"ckpt_{it:06d}.srw", spec, params, {**meta, "iteration": it})

    if out is not None:
        save_checkpoint(out / "model.srw", spec, params, {**meta, "iteration": cfg.iterations})
        (out / "loss.csv").write_text(format_loss_csv(history))
    tracing.emit("training_done", "training.train", iterations=cfg.iterations, final_loss=history[-1][1] if history else None)
    return TrainResult(params, history, spec)
