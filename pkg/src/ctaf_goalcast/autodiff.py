"""Tape-based reverse-mode automatic differentiation over float64 numpy arrays.

Only the kernels the goal predictor needs are provided. Operations record onto
the active :class:`Tape` when at least one input requires a gradient; outside a
tape they evaluate eagerly and nothing is kept.

Example::

    x = Tensor(np.array(3.0), requires_grad=True)
    with Tape() as tape:
        loss = x * x
    backward(tape, loss)   # x.grad == 6.0
"""

from __future__ import annotations

import os
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "NonFiniteError",
    "backward",
    "checked",
    "grad_check",
    "conv1d_causal",
    "relu",
    "linear",
    "embedding_gather",
    "global_average_pool",
    "softmax",
    "log_softmax",
    "logsumexp",
    "exp",
    "log",
    "clip",
    "concat",
    "reshape",
    "tsum",
    "tmean",
]


class NonFiniteError(FloatingPointError):
    """Raised in checked mode when an op produces NaN or Inf."""


_CHECKED = os.environ.get("CTAF_GOALCAST_DEBUG", "0") not in ("", "0", "false")
_ACTIVE: list["Tape"] = []


@contextmanager
def checked(enabled: bool = True):
    """Enable the non-finite tripwire for the duration of the block."""
    global _CHECKED
    old = _CHECKED
    _CHECKED = enabled
    try:
        yield
    finally:
        _CHECKED = old


def is_checked() -> bool:
    return _CHECKED


class Tensor:
    """A float64 array that can take part in a recorded computation."""

    __slots__ = ("value", "requires_grad", "grad", "parents", "backward_fn", "op", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.parents: tuple[Tensor, ...] = ()
        self.backward_fn: Callable | None = None
        self.op = "leaf"
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def __repr__(self) -> str:
        label = self.name or self.op
        return f"Tensor({label}, shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        return float(self.value.reshape(-1)[0]) if self.value.size == 1 else float("nan")

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, index):
        return take(self, index)


class Tape:
    """Ordered record of the ops evaluated while the tape is active."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.pop()

    def __len__(self) -> int:
        return len(self.nodes)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value: np.ndarray, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    if _CHECKED and not np.all(np.isfinite(value)):
        raise NonFiniteError(f"non-finite value produced by {op}")
    out = Tensor(value)
    out.op = op
    if _ACTIVE and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out.backward_fn = backward_fn
        _ACTIVE[-1].nodes.append(out)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _make(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _make(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _make(
        a.value * b.value,
        (a, b),
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
        "mul",
    )


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.value / b.value
    return _make(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / b.value, a.shape), _unbroadcast(-g * out / b.value, b.shape)),
        "div",
    )


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.value)
    return _make(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    return _make(np.log(x.value), (x,), lambda g: (g / x.value,), "log")


def square(x: Tensor) -> Tensor:
    return _make(x.value * x.value, (x,), lambda g: (2.0 * g * x.value,), "square")


def relu(x: Tensor) -> Tensor:
    mask = x.value > 0
    return _make(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,), "relu")


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; the gradient is zero wherever the clamp is active."""
    mask = (x.value >= lo) & (x.value <= hi)
    return _make(np.clip(x.value, lo, hi), (x,), lambda g: (g * mask,), "clip")


# ----------------------------------------------------------------- structural


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return _make(x.value.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def take(x: Tensor, index) -> Tensor:
    def bw(g):
        full = np.zeros_like(x.value)
        np.add.at(full, index, g)
        return (full,)

    return _make(np.asarray(x.value[index]), (x,), bw, "take")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate([t.value for t in tensors], axis=axis), tensors, bw, "concat")


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(np.asarray(x.value.sum(axis=axis, keepdims=keepdims)), (x,), bw, "sum")


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / count)


# ------------------------------------------------------------- contractions


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` for ``x`` of shape (B, in) and weight (out, in)."""
    out = x.value @ weight.value.T
    if bias is not None:
        out = out + bias.value
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        grads = (g @ weight.value, g.T @ x.value)
        if bias is not None:
            grads = grads + (g.sum(axis=0),)
        return grads

    return _make(out, parents, bw, "linear")


def embedding_gather(table: Tensor, index) -> Tensor:
    """Rows of ``table`` selected by an integer index array."""
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= table.shape[0]):
        raise IndexError(f"embedding index out of range for {table.shape[0]} rows")

    def bw(g):
        full = np.zeros_like(table.value)
        np.add.at(full, index, g)
        return (full,)

    return _make(table.value[index], (table,), bw, "embedding")


def conv1d_causal(x: Tensor, weight: Tensor, bias: Tensor | None, dilation: int = 1) -> Tensor:
    """Causal dilated 1-D convolution.

    ``x`` is (C_in, T) or (B, C_in, T); ``weight`` is (C_out, C_in, k). Tap ``j``
    multiplies ``x[t - j*dilation]``, and the sequence is left-padded with zeros so
    the output keeps length T.
    """
    if dilation < 1:
        raise ValueError("dilation must be >= 1")
    unbatched = x.value.ndim == 2
    xv = x.value[None] if unbatched else x.value
    if xv.ndim != 3:
        raise ValueError(f"conv1d_causal expects (C,T) or (B,C,T) input, got {x.shape}")
    w = weight.value
    if w.ndim != 3 or w.shape[1] != xv.shape[1]:
        raise ValueError(f"weight shape {w.shape} does not match input channels {xv.shape[1]}")
    if bias is not None and bias.shape != (w.shape[0],):
        raise ValueError(f"bias shape {bias.shape} does not match {w.shape[0]} output channels")
    B, C, T = xv.shape
    O, _, k = w.shape
    pad = (k - 1) * dilation
    xp = np.concatenate([np.zeros((B, C, pad)), xv], axis=2) if pad else xv
    # cols[b, t, c, j] = x[b, c, t - j*dilation]
    cols = np.stack([xp[:, :, pad - j * dilation : pad - j * dilation + T] for j in range(k)], axis=3)
    cols = cols.transpose(0, 2, 1, 3).reshape(B * T, C * k)
    wmat = w.reshape(O, C * k)
    out = (cols @ wmat.T).reshape(B, T, O).transpose(0, 2, 1)
    if bias is not None:
        out = out + bias.value[None, :, None]
    if unbatched:
        out = out[0]
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        g3 = g[None] if unbatched else g
        gmat = g3.transpose(0, 2, 1).reshape(B * T, O)
        gw = (gmat.T @ cols).reshape(O, C, k)
        gcols = (gmat @ wmat).reshape(B, T, C, k)
        gxp = np.zeros((B, C, T + pad))
        for j in range(k):
            start = pad - j * dilation
            gxp[:, :, start : start + T] += gcols[:, :, :, j].transpose(0, 2, 1)
        gx = gxp[:, :, pad:]
        if unbatched:
            gx = gx[0]
        grads = (gx, gw)
        if bias is not None:
            grads = grads + (g3.sum(axis=(0, 2)),)
        return grads

    return _make(out, parents, bw, "conv1d")


def global_average_pool(h: Tensor) -> Tensor:
    """Mean over the trailing time axis: (C, T) -> (C,) or (B, C, T) -> (B, C)."""
    T = h.shape[-1]
    if T == 0:
        raise ValueError("cannot pool an empty sequence")
    return _make(
        h.value.mean(axis=-1),
        (h,),
        lambda g: (np.repeat(g[..., None] / T, T, axis=-1),),
        "gap",
    )


def logsumexp(x: Tensor, axis: int = -1) -> Tensor:
    m = np.max(x.value, axis=axis, keepdims=True)
    shifted = np.exp(x.value - m)
    s = shifted.sum(axis=axis, keepdims=True)
    out = (m + np.log(s)).squeeze(axis)
    weights = shifted / s
    return _make(out, (x,), lambda g: (np.expand_dims(g, axis) * weights,), "logsumexp")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    m = np.max(x.value, axis=axis, keepdims=True)
    z = x.value - m
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)
    return _make(out, (x,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),), "log_softmax")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    m = np.max(x.value, axis=axis, keepdims=True)
    e = np.exp(x.value - m)
    p = e / e.sum(axis=axis, keepdims=True)
    return _make(p, (x,), lambda g: (p * (g - (g * p).sum(axis=axis, keepdims=True)),), "softmax")


# ------------------------------------------------------------------- backward


def backward(tape: Tape, loss: Tensor, params: Iterable[Tensor] | None = None) -> list[np.ndarray]:
    """Propagate d(loss)/d(.) through ``tape`` in reverse recording order.

    Gradients accumulate into ``.grad`` of every leaf that requires one (fan-out
    sums). Leaves in ``params`` that the loss never touched get zeros. Returns the
    gradients of ``params`` in order (empty list when ``params`` is None).
    """
    if loss.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.shape}")
    params = list(params) if params is not None else []
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    leaves: dict[int, Tensor] = {}
    if loss.backward_fn is None and loss.requires_grad:
        leaves[id(loss)] = loss
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
            if parent.backward_fn is None:
                leaves[key] = parent
    for key, leaf in leaves.items():
        g = grads.get(key, np.zeros_like(leaf.value))
        leaf.grad = g if leaf.grad is None else leaf.grad + g
    out = []
    for p in params:
        if p.grad is None:
            p.grad = np.zeros_like(p.value)
        out.append(p.grad)
    return out


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    samples: int = 200,
    seed: int = 0,
    floor: float = 1e-6,
) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` rebuilds the scalar loss from the current values of ``params``.
    Coordinates are sampled uniformly (seeded) across all parameter entries.
    ``floor`` bounds the denominator so near-zero gradients, where central
    differences are dominated by roundoff, are compared absolutely.
    """
    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = f()
    analytic = backward(tape, loss, params)
    sizes = np.array([p.size for p in params])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    rng = np.random.default_rng(seed)
    total = int(offsets[-1])
    picks = rng.choice(total, size=min(samples, total), replace=False)
    worst = 0.0
    for flat in picks:
        i = int(np.searchsorted(offsets, flat, side="right") - 1)
        j = int(flat - offsets[i])
        view = params[i].value.reshape(-1)
        orig = view[j]
        view[j] = orig + eps
        up = f().item()
        view[j] = orig - eps
        down = f().item()
        view[j] = orig
        numeric = (up - down) / (2 * eps)
        a = analytic[i].reshape(-1)[j]
        err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
        worst = max(worst, err)
    return worst
