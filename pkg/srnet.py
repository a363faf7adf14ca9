"""Scaled-down RRDB x2 super-resolution network and its SRW1 checkpoint format.

Graph: head conv -> num_rrdb RRDB blocks -> trunk conv (+ global residual) ->
nearest x2 + conv -> lrelu -> conv -> lrelu -> conv, plus a bicubic x2 skip of the input.
The final conv starts at zero, so an untrained model predicts the bicubic upsample.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from autograd import TensorNode, add, concat, conv2d, leaky_relu, scale, separable_resample, sub, upsample_nearest2
from raster import Rng
from signal_ops import cubic_matrix
from validation import RasterFormatError, ShapeError

DENSE_CONVS = 5
RDB_PER_RRDB = 3
RESIDUAL_INIT_SCALE = 0.1
LRELU_SLOPE = 0.2

CKPT_MAGIC = b"SRW1"


@dataclass(frozen=True)
class ModelSpec:
    in_bands: int = 3
    features: int = 32
    num_rrdb: int = 4
    growth: int = 16
    residual_scale: float = 0.2
    scale: int = 2

    def __post_init__(self) -> None:
        if self.in_bands not in (1, 3):
            raise ValueError(f"in_bands must be 1 or 3, got {self.in_bands}")
        if self.scale != 2:
            raise ValueError("only x2 super-resolution is supported")
        if self.features < 1 or self.growth < 1 or self.num_rrdb < 0:
            raise ValueError("features and growth must be positive, num_rrdb non-negative")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ModelSpec:
        return cls(**d)


PROFILES = {
    "tiny": dict(features=32, num_rrdb=4, growth=16),
    "paper": dict(features=64, num_rrdb=8, growth=32),
}


def spec_profile(name: str, in_bands: int = 3) -> ModelSpec:
    if name not in PROFILES:
        raise ValueError(f"unknown model profile: {name}")
    return ModelSpec(in_bands=in_bands, **PROFILES[name])


def param_shapes(spec: ModelSpec) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) of every weight and bias."""
    f, g, c = spec.features, spec.growth, spec.in_bands
    shapes: list[tuple[str, tuple[int, ...]]] = []

    def conv(name: str, cin: int, cout: int) -> None:
        shapes.append((f"{name}.w", (cout, cin, 3, 3)))
        shapes.append((f"{name}.b", (cout,)))

    conv("head", c, f)
    for i in range(spec.num_rrdb):
        for j in range(RDB_PER_RRDB):
            for k in range(DENSE_CONVS):
                cout = f if k == DENSE_CONVS - 1 else g
                conv(f"rrdb{i}.rdb{j}.conv{k}", f + k * g, cout)
    conv("trunk", f, f)
    conv("up", f, f)
    conv("tail1", f, f)
    conv("tail2", f, c)
    return shapes


def param_count(spec: ModelSpec) -> int:
    return sum(math.prod(shape) for _, shape in param_shapes(spec))


@dataclass
class ModelParams:
    """Named weight/bias arrays in param_shapes order."""

    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def names(self) -> list[str]:
        return list(self.tensors)

    def nodes(self, requires_grad: bool = False) -> dict[str, TensorNode]:
        return {k: TensorNode(v, requires_grad=requires_grad) for k, v in self.tensors.items()}

    def astype(self, dtype: np.dtype) -> ModelParams:
        return ModelParams({k: v.astype(dtype) for k, v in self.tensors.items()})

    def copy(self) -> ModelParams:
        return ModelParams({k: v.copy() for k, v in self.tensors.items()})

    def zeros_like(self) -> ModelParams:
        return ModelParams({k: np.zeros_like(v) for k, v in self.tensors.items()})

    def count(self) -> int:
        return sum(v.size for v in self.tensors.values())


def init_params(spec: ModelSpec, rng: Rng, dtype: np.dtype = np.float32) -> ModelParams:
    """Kaiming-normal weights, dense-block convs scaled by 0.1, zero biases, zero final conv."""
    tensors = {}
    for name, shape in param_shapes(spec):
        if name.endswith(".b") or name.startswith("tail2."):
            tensors[name] = np.zeros(shape, dtype=dtype)
            continue
        fan_in = shape[1] * shape[2] * shape[3]
        w = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape)
        if name.startswith("rrdb"):
            w *= RESIDUAL_INIT_SCALE
        tensors[name] = w.astype(dtype)
    return ModelParams(tensors)


def zero_params(spec: ModelSpec, dtype: np.dtype = np.float32) -> ModelParams:
    return ModelParams({name: np.zeros(shape, dtype=dtype) for name, shape in param_shapes(spec)})


def _conv(x: TensorNode, p: dict[str, TensorNode], name: str) -> TensorNode:
    return conv2d(x, p[f"{name}.w"], p[f"{name}.b"])


def dense_block(x: TensorNode, p: dict[str, TensorNode], prefix: str, beta: float) -> TensorNode:
    """Five densely connected convs; x + beta * last."""
    feats = [x]
    for k in range(DENSE_CONVS - 1):
        feats.append(leaky_relu(_conv(concat(feats), p, f"{prefix}.conv{k}"), LRELU_SLOPE))
    last = _conv(concat(feats), p, f"{prefix}.conv{DENSE_CONVS - 1}")
    return add(x, scale(last, beta))


def rrdb_forward(x: TensorNode, p: dict[str, TensorNode], index: int, beta: float) -> TensorNode:
    """x + beta * D(x) with D(x) = rdb3(rdb2(rdb1(x))) - x; identity for zero weights or beta = 0."""
    y = x
    for j in range(RDB_PER_RRDB):
        y = dense_block(y, p, f"rrdb{index}.rdb{j}", beta)
    return add(x, scale(sub(y, x), beta))


def upsample_x2(x: TensorNode, p: dict[str, TensorNode], name: str = "up") -> TensorNode:
    """Nearest-neighbour x2 duplication followed by a 3x3 conv."""
    return _conv(upsample_nearest2(x), p, name)


def bicubic_skip(x: TensorNode) -> TensorNode:
    _, _, h, w = x.shape
    return separable_resample(x, cubic_matrix(h, 2 * h), cubic_matrix(w, 2 * w))


def model_forward(lr: TensorNode, p: dict[str, TensorNode], spec: ModelSpec) -> TensorNode:
    """(N, in_bands, H, W) -> (N, in_bands, 2H, 2W)."""
    if lr.data.ndim != 4 or lr.shape[1] != spec.in_bands:
        raise ShapeError(f"model expects (N, {spec.in_bands}, H, W), got {lr.shape}")
    fea = _conv(lr, p, "head")
    trunk = fea
    for i in range(spec.num_rrdb):
        trunk = rrdb_forward(trunk, p, i, spec.residual_scale)
    fea = add(fea, _conv(trunk, p, "trunk"))
    up = leaky_relu(upsample_x2(fea, p), LRELU_SLOPE)
    out = _conv(leaky_relu(_conv(up, p, "tail1"), LRELU_SLOPE), p, "tail2")
    return add(out, bicubic_skip(lr))


def save_checkpoint(path: str | Path, spec: ModelSpec, params: ModelParams, meta: dict[str, Any] | None = None) -> None:
    """SRW1: magic | u32 header length | JSON header | u32 count | per tensor:
    u16 name length | name | u8 ndim | u32 dims | float32 little-endian payload."""
    expected = dict(param_shapes(spec))
    if set(expected) != set(params.tensors):
        raise ShapeError("parameter names do not match the model spec")
    header = json.dumps({"spec": spec.to_dict(), "meta": meta or {}}, sort_keys=True).encode()
    chunks = [CKPT_MAGIC, struct.pack("<I", len(header)), header, struct.pack("<I", len(params.tensors))]
    for name, arr in params.tensors.items():
        if arr.shape != expected[name]:
            raise ShapeError(f"{name}: shape {arr.shape} != {expected[name]}")
        raw = name.encode()
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(arr.astype("<f4").tobytes(order="C"))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> tuple[ModelSpec, ModelParams, dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        raise RasterFormatError("missing checkpoint", path)
    blob = path.read_bytes()
    if blob[:4] != CKPT_MAGIC:
        raise RasterFormatError("bad magic", path)
    try:
        pos = 4
        (hlen,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        header = json.loads(blob[pos : pos + hlen].decode())
        pos += hlen
        (count,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            name = blob[pos : pos + nlen].decode()
            pos += nlen
            (ndim,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            n = math.prod(shape)
            if pos + 4 * n > len(blob):
                raise RasterFormatError(f"truncated tensor {name}", path)
            tensors[name] = np.frombuffer(blob, dtype="<f4", count=n, offset=pos).reshape(shape).astype(np.float32)
            pos += 4 * n
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise RasterFormatError(f"corrupt checkpoint: {e}", path) from e
    try:
        spec = ModelSpec.from_dict(header["spec"])
        meta = dict(header.get("meta") or {})
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise RasterFormatError(f"bad checkpoint header: {e!r}", path) from e
    if dict(param_shapes(spec)) != {k: v.shape for k, v in tensors.items()}:
        raise RasterFormatError("checkpoint tensors do not match its spec", path)
    return spec, ModelParams(tensors), meta


def checkpoint_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
