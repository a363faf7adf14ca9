"""Reverse-mode differentiation over numpy arrays, just enough for convolutional SR networks.

Tensors are (N, C, H, W). Every op keeps the dtype of its inputs, so float64 inputs and
parameters give a float64 graph for gradient checks; production runs in float32.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from validation import ShapeError

_grad_enabled = True


@contextmanager
def no_grad() -> Iterator[None]:
    """Build no graph inside the block (inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class TensorNode:
    __slots__ = ("data", "grad", "parents", "op", "requires_grad", "_backward")

    def __init__(
        self,
        data: np.ndarray,
        parents: Sequence[TensorNode] = (),
        op: str = "leaf",
        requires_grad: bool = False,
    ):
        self.data = data
        self.grad: np.ndarray | None = None
        self.op = op
        track = _grad_enabled and (requires_grad or any(p.requires_grad for p in parents))
        self.requires_grad = track
        self.parents: tuple[TensorNode, ...] = tuple(parents) if track else ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Populate .grad of every node reachable from this node. seed defaults to ones (scalar losses)."""
        order: list[TensorNode] = []
        seen: set[int] = set()
        stack: list[tuple[TensorNode, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if id(p) not in seen:
                    stack.append((p, False))

        for node in order:
            if node.requires_grad:
                node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data) if seed is None else np.asarray(seed, dtype=self.data.dtype).copy()
        for node in reversed(order):
            if node._backward is not None and node.requires_grad:
                node._backward(node.grad)

    def __repr__(self) -> str:
        return f"TensorNode(op={self.op}, shape={self.shape}, dtype={self.dtype})"


def _node(data: np.ndarray, parents: Sequence[TensorNode], op: str, backward: Callable[[np.ndarray], None]) -> TensorNode:
    out = TensorNode(data, parents, op)
    if out.requires_grad:
        out._backward = backward
    return out


def add(a: TensorNode, b: TensorNode) -> TensorNode:
    if a.shape != b.shape:
        raise ShapeError(f"add: shape {a.shape} != {b.shape}")

    def backward(g: np.ndarray) -> None:
        a._accumulate(g)
        b._accumulate(g)

    return _node(a.data + b.data, (a, b), "add", backward)


def sub(a: TensorNode, b: TensorNode) -> TensorNode:
    if a.shape != b.shape:
        raise ShapeError(f"sub: shape {a.shape} != {b.shape}")

    def backward(g: np.ndarray) -> None:
        a._accumulate(g)
        b._accumulate(-g)

    return _node(a.data - b.data, (a, b), "sub", backward)


def scale(a: TensorNode, s: float) -> TensorNode:
    s_cast = a.data.dtype.type(s)

    def backward(g: np.ndarray) -> None:
        a._accumulate(g * s_cast)

    return _node(a.data * s_cast, (a,), "scale", backward)


def concat(xs: Sequence[TensorNode], axis: int = 1) -> TensorNode:
    sizes = [x.shape[axis] for x in xs]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g: np.ndarray) -> None:
        for x, part in zip(xs, np.split(g, bounds, axis=axis)):
            x._accumulate(part)

    return _node(np.concatenate([x.data for x in xs], axis=axis), tuple(xs), "concat", backward)


def _conv3x3(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Same-size 3x3 cross-correlation with zero padding 1. x (N,C,H,W), w (O,C,3,3)."""
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = sliding_window_view(xp, (3, 3), axis=(2, 3))
    out = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3]))
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv2d(x: TensorNode, w: TensorNode, b: TensorNode | None = None) -> TensorNode:
    """3x3 convolution, stride 1, zero padding 1: output spatial dims equal input."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and weights, got {x.shape} and {w.shape}")
    if w.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d supports 3x3 kernels, got {w.shape[2:]}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: input has {x.shape[1]} channels, weights expect {w.shape[1]}")
    if b is not None and b.shape != (w.shape[0],):
        raise ShapeError(f"conv2d: bias shape {b.shape} != ({w.shape[0]},)")

    out = _conv3x3(x.data, w.data)
    if b is not None:
        out += b.data[None, :, None, None]

    def backward(g: np.ndarray) -> None:
        if x.requires_grad:
            flipped = np.ascontiguousarray(w.data.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
            x._accumulate(_conv3x3(g, flipped))
        if w.requires_grad:
            xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
            cols = sliding_window_view(xp, (3, 3), axis=(2, 3))
            w._accumulate(np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3])))
        if b is not None:
            b._accumulate(g.sum(axis=(0, 2, 3)))

    parents = (x, w) if b is None else (x, w, b)
    return _node(out, parents, "conv2d", backward)


def leaky_relu(x: TensorNode, slope: float = 0.2) -> TensorNode:
    """max(x, slope*x) for 0 < slope < 1."""
    s = x.data.dtype.type(slope)
    pos = x.data > 0

    def backward(g: np.ndarray) -> None:
        x._accumulate(np.where(pos, g, g * s))

    return _node(np.where(pos, x.data, x.data * s), (x,), "leaky_relu", backward)


def upsample_nearest2(x: TensorNode) -> TensorNode:
    n, c, h, w = x.shape

    def backward(g: np.ndarray) -> None:
        x._accumulate(g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)))

    return _node(x.data.repeat(2, axis=2).repeat(2, axis=3), (x,), "upsample_nearest2", backward)


def separable_resample(x: TensorNode, rows: np.ndarray, cols: np.ndarray) -> TensorNode:
    """rows @ x @ cols.T on the trailing two axes (linear resampling, e.g. bicubic)."""
    r = rows.astype(x.dtype)
    c = cols.astype(x.dtype)

    def backward(g: np.ndarray) -> None:
        x._accumulate(r.T @ g @ c)

    return _node(r @ x.data @ c.T, (x,), "separable_resample", backward)


def l1_loss(pred: TensorNode, target: TensorNode) -> TensorNode:
    """Mean absolute error; subgradient 0 at exact ties."""
    if pred.shape != target.shape:
        raise ShapeError(f"l1_loss: shape {pred.shape} != {target.shape}")
    diff = pred.data - target.data
    n = diff.size

    def backward(g: np.ndarray) -> None:
        grad = np.sign(diff) * (g / n)
        pred._accumulate(grad)
        target._accumulate(-grad)

    return _node(np.array(np.abs(diff).mean(), dtype=diff.dtype), (pred, target), "l1_loss", backward)
