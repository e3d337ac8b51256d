"""Minimal dense float64 tensor library with a reverse-mode gradient tape.

Define-by-run: ops executed while a Tape is active record a backward closure;
`backward` replays the tape in reverse.  Composite ops (layer norm, GRU, ...)
are built from the primitives so their gradients come for free.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class Tensor:
    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


_ACTIVE: "Tape | None" = None


class Tape:
    """Ordered record of executed ops; replaying in reverse accumulates grads."""

    def __init__(self):
        self.records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        global _ACTIVE
        if _ACTIVE is not None:
            raise RuntimeError("a tape is already active")
        _ACTIVE = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE
        _ACTIVE = None
        return False


def _record(out: Tensor, inputs: Sequence[Tensor], bwd: Callable) -> Tensor:
    if _ACTIVE is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _ACTIVE.records.append((out, tuple(inputs), bwd))
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(tensor) into .grad for every requires_grad tensor."""
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
    if not any(out is loss for out, _, _ in tape.records):
        raise ValueError("loss is not an output recorded on this tape")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    keep: dict[int, Tensor] = {id(loss): loss}
    output_ids = {id(out) for out, _, _ in tape.records}
    for out, inputs, bwd in reversed(tape.records):
        g = grads.get(id(out))
        if g is None:
            continue
        for inp, gi in zip(inputs, bwd(g)):
            if gi is None:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
                keep[key] = inp
    for key, t in keep.items():
        if t.requires_grad and key not in output_ids:
            t.grad = grads[key] if t.grad is None else t.grad + grads[key]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _shape_check(cond: bool, op: str, *shapes) -> None:
    if not cond:
        raise ValueError(f"{op}: incompatible shapes {[tuple(s) for s in shapes]}")


# ---------------------------------------------------------------- primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data + b.data)
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.data.shape),
                                           _unbroadcast(g, b.data.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data - b.data)
    return _record(out, (a, b), lambda g: (_unbroadcast(g, a.data.shape),
                                           _unbroadcast(-g, b.data.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data * b.data)
    return _record(out, (a, b), lambda g: (_unbroadcast(g * b.data, a.data.shape),
                                           _unbroadcast(g * a.data, b.data.shape)))


def div(a: Tensor, b: Tensor) -> Tensor:
    out = Tensor(a.data / b.data)
    return _record(out, (a, b),
                   lambda g: (_unbroadcast(g / b.data, a.data.shape),
                              _unbroadcast(-g * a.data / (b.data ** 2), b.data.shape)))


def scale(a: Tensor, s: float) -> Tensor:
    out = Tensor(a.data * s)
    return _record(out, (a,), lambda g: (g * s,))


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _shape_check(a.data.ndim in (1, 2) and b.data.ndim in (1, 2)
                 and a.data.shape[-1] == b.data.shape[0],
                 "matmul", a.data.shape, b.data.shape)
    out = Tensor(a.data @ b.data)

    def bwd(g):
        ad, bd = a.data, b.data
        if ad.ndim == 2 and bd.ndim == 2:
            return g @ bd.T, ad.T @ g
        if ad.ndim == 2 and bd.ndim == 1:
            return np.outer(g, bd), ad.T @ g
        if ad.ndim == 1 and bd.ndim == 2:
            return g @ bd.T, np.outer(ad, g)
        return g * bd, g * ad

    return _record(out, (a, b), bwd)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(out, tuple(tensors), bwd)


def transpose(a: Tensor) -> Tensor:
    out = Tensor(a.data.T)
    return _record(out, (a,), lambda g: (g.T,))


def reshape(a: Tensor, shape: tuple) -> Tensor:
    out = Tensor(a.data.reshape(shape))
    return _record(out, (a,), lambda g: (g.reshape(a.data.shape),))


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    out = Tensor(a.data[start:stop])

    def bwd(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        return (full,)

    return _record(out, (a,), bwd)


def gather_rows(a: Tensor, indices: Sequence[int]) -> Tensor:
    idx = np.asarray(indices, dtype=np.intp)
    out = Tensor(a.data[idx])

    def bwd(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _record(out, (a,), bwd)


def embedding_lookup(table: Tensor, indices: Sequence[int]) -> Tensor:
    return gather_rows(table, indices)


def sum_(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _record(out, (a,), bwd)


def mean_pool(a: Tensor, axis: int = 0, keepdims: bool = False) -> Tensor:
    n = a.data.shape[axis]
    return scale(sum_(a, axis=axis, keepdims=keepdims), 1.0 / n)


def min_pool(a: Tensor, axis: int = 0) -> Tensor:
    axis = axis % a.data.ndim
    out = Tensor(a.data.min(axis=axis))
    argmin = a.data.argmin(axis=axis)

    def bwd(g):
        full = np.zeros_like(a.data)
        grid = np.indices(out.data.shape)
        idx = list(grid)
        idx.insert(axis, argmin)
        full[tuple(idx)] = g
        return (full,)

    return _record(out, (a,), bwd)


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))
    return _record(out, (a,), lambda g: (g * (a.data > 0),))


def tanh(a: Tensor) -> Tensor:
    out = Tensor(np.tanh(a.data))
    return _record(out, (a,), lambda g: (g * (1.0 - out.data ** 2),))


def sigmoid(a: Tensor) -> Tensor:
    out = Tensor(1.0 / (1.0 + np.exp(-a.data)))
    return _record(out, (a,), lambda g: (g * out.data * (1.0 - out.data),))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """tanh approximation of GELU."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)
    out = Tensor(0.5 * x * (1.0 + t))

    def bwd(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * x ** 2)
        grad = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * d_inner
        return (g * grad,)

    return _record(out, (a,), bwd)


def exp(a: Tensor) -> Tensor:
    out = Tensor(np.exp(a.data))
    return _record(out, (a,), lambda g: (g * out.data,))


def log(a: Tensor) -> Tensor:
    out = Tensor(np.log(a.data))
    return _record(out, (a,), lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    out = Tensor(np.sqrt(a.data))
    return _record(out, (a,), lambda g: (g * 0.5 / out.data,))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(p)

    def bwd(g):
        dot = (g * p).sum(axis=axis, keepdims=True)
        return (p * (g - dot),)

    return _record(out, (a,), bwd)


def dropout(a: Tensor, rate: float, seed: int, training: bool) -> Tensor:
    """Seeded inverted dropout; identity in inference mode.

    The caller supplies a distinct counter-derived seed per call so forward
    and backward share one mask and runs are reproducible.
    """
    if not training or rate <= 0.0:
        return a
    rng = np.random.Generator(np.random.PCG64(seed))
    mask = (rng.random(a.data.shape) >= rate) / (1.0 - rate)
    out = Tensor(a.data * mask)
    return _record(out, (a,), lambda g: (g * mask,))


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy, numerically stable in the logits."""
    x = logits.data
    y = np.asarray(targets, dtype=np.float64)
    _shape_check(x.shape == y.shape, "bce_with_logits", x.shape, y.shape)
    per = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    out = Tensor(np.array(per.mean()))
    n = max(x.size, 1)

    def bwd(g):
        p = 1.0 / (1.0 + np.exp(-x))
        return (g * (p - y) / n,)

    return _record(out, (logits,), bwd)


# --------------------------------------------------------------- composites


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply the learned affine."""
    mu = mean_pool(x, axis=-1, keepdims=True)
    centered = sub(x, mu)
    var = mean_pool(mul(centered, centered), axis=-1, keepdims=True)
    xhat = div(centered, sqrt(add(var, Tensor(np.array(eps)))))
    return add(mul(xhat, gain), bias)


@dataclass
class GRUParams:
    wz: Tensor  # (d_in + d) x d
    bz: Tensor
    wr: Tensor
    br: Tensor
    wh: Tensor
    bh: Tensor

    def tensors(self) -> list[Tensor]:
        return [self.wz, self.bz, self.wr, self.br, self.wh, self.bh]


def gru_cell(x: Tensor, h: Tensor, p: GRUParams) -> Tensor:
    """Standard GRU cell over 1-D input/state vectors."""
    _shape_check(x.data.ndim == 1 and h.data.ndim == 1, "gru_cell", x.shape, h.shape)
    xh = concat([x, h])
    z = sigmoid(add(matmul(xh, p.wz), p.bz))
    r = sigmoid(add(matmul(xh, p.wr), p.br))
    cand = tanh(add(matmul(concat([x, mul(r, h)]), p.wh), p.bh))
    one = Tensor(np.ones_like(z.data))
    return add(mul(sub(one, z), h), mul(z, cand))


# --------------------------------------------------------------- grad check


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    max_samples: int = 50,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between tape gradients and central differences.

    `f` must be deterministic (dropout disabled) and close over `params`.
    Samples up to `max_samples` coordinates per tensor.
    """
    rng = rng or np.random.default_rng(0)
    for p in params:
        p.requires_grad = True
        p.grad = None
    tape = Tape()
    with tape:
        loss = f()
    if not np.isfinite(loss.data).all():
        raise FloatingPointError("non-finite loss in grad_check")
    backward(tape, loss)

    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        n = flat.size
        coords = range(n) if n <= max_samples else sorted(
            rng.choice(n, size=max_samples, replace=False)
        )
        gflat = (p.grad.reshape(-1) if p.grad is not None else np.zeros(n))
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(f().data)
            flat[i] = orig - eps
            f_minus = float(f().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            analytic = gflat[i]
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
            worst = max(worst, err)
    return worst


# --------------------------------------------------------------- checkpoint

_MAGIC = b"MVGC"
_VERSION = 1


def save_checkpoint(tensors: dict[str, Tensor], path: str) -> None:
    """Flat binary: magic, version, count, then per tensor name/rank/dims/data."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(tensors)))
        for name, t in tensors.items():
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", t.data.ndim))
            fh.write(struct.pack(f"<{t.data.ndim}Q", *t.data.shape))
            fh.write(t.data.astype("<f8").tobytes())


def load_checkpoint(path: str) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        version, count = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        out = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", fh.read(4))
            name = fh.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", fh.read(4))
            dims = struct.unpack(f"<{rank}Q", fh.read(8 * rank)) if rank else ()
            size = int(np.prod(dims)) if dims else 1
            data = np.frombuffer(fh.read(8 * size), dtype="<f8").reshape(dims)
            out[name] = data.astype(np.float64)
        return out
