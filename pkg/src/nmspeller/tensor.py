"""float64 tensors with a reverse-mode gradient tape.

Every model computation in this package flows through the kernels defined
here. A kernel computes its forward value with numpy and, when recording is
enabled, attaches a closure that maps the upstream gradient to per-parent
gradients. ``backward`` replays those closures over the recorded subgraph in
reverse execution order, summing contributions into the ``grad`` buffers of
parameter leaves.

Tensors are desk-scale: 2-D matrices, 1-D vectors and 0-d scalars, always
float64. Broadcasting is limited to the fixed patterns the model needs (row
bias, per-row column scale, row tiling).
"""

from __future__ import annotations

import itertools
import math
from contextlib import contextmanager

import numpy as np
from scipy.special import erf, expit

from .errors import ConfigError, GraphError, InputError, ShapeError

_seq_counter = itertools.count()
_grad_stack = [True]

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@contextmanager
def no_grad():
    """Disable tape recording inside the block; forward values only."""
    _grad_stack.append(False)
    try:
        yield
    finally:
        _grad_stack.pop()


def grad_enabled():
    return _grad_stack[-1]


class Tensor:
    """Dense float64 array, optionally participating in the gradient tape.

    ``grad`` is allocated (zeros) for ``requires_grad`` tensors and is summed
    into by every ``backward`` call until ``zero_grad`` resets it.
    """

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.name = name
        self.decay = True  # AdamW weight-decay eligibility
        self._parents = ()
        self._grad_fn = None
        self._seq = next(_seq_counter)
        self._backward_done = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def _needs(self):
        return self.requires_grad or self._grad_fn is not None

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={tuple(self.shape)}, requires_grad={self.requires_grad}{tag})"


def parameter(data, name=None, decay=True):
    """Trainable leaf tensor. ``decay=False`` exempts it from weight decay."""
    t = Tensor(data, requires_grad=True, name=name)
    t.decay = decay
    return t


def _make(data, parents, grad_fn):
    out = Tensor(data)
    if grad_enabled() and any(p._needs for p in parents):
        out._parents = tuple(parents)
        out._grad_fn = grad_fn
    return out


def _scalar(g):
    return float(np.asarray(g).reshape(-1)[0])


def backward(loss):
    """Populate ``grad`` on every reachable parameter leaf of ``loss``.

    ``loss`` must be a scalar from a live graph; a second call on the same
    graph raises ``GraphError`` (rebuild the forward pass instead).
    """
    if loss.data.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._backward_done:
        raise GraphError("backward already ran on this graph; rebuild the forward pass")
    loss._backward_done = True

    seed = np.ones_like(loss.data)
    if loss._grad_fn is None:
        if loss.requires_grad:
            loss.grad += seed
        return

    nodes = []
    seen = {id(loss)}
    stack = [loss]
    while stack:
        node = stack.pop()
        nodes.append(node)
        for p in node._parents:
            if p._grad_fn is not None and id(p) not in seen:
                seen.add(id(p))
                stack.append(p)
    # Execution order is the creation order, so descending sequence numbers
    # visit each node exactly once with all consumers already processed.
    nodes.sort(key=lambda t: t._seq, reverse=True)

    grads = {id(loss): seed}
    for node in nodes:
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for p, pg in node._grad_fn(g):
            if p._grad_fn is not None:
                prev = grads.get(id(p))
                grads[id(p)] = pg if prev is None else prev + pg
            elif p.requires_grad:
                p.grad += pg


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


def _require_2d(x, op):
    if x.data.ndim != 2:
        raise ShapeError(f"{op} needs a 2-D tensor, got shape {x.shape}")


def matmul(a, b):
    """Matrix product; gradient rule d(a.b) = (g.bT, aT.g)."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def grad_fn(g):
        out = []
        if a._needs:
            out.append((a, g @ b.data.T))
        if b._needs:
            out.append((b, a.data.T @ g))
        return out

    return _make(a.data @ b.data, (a, b), grad_fn)


def transpose(x):
    _require_2d(x, "transpose")

    def grad_fn(g):
        return [(x, g.T)] if x._needs else []

    return _make(x.data.T, (x,), grad_fn)


def add(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes differ, {a.shape} vs {b.shape}")

    def grad_fn(g):
        out = []
        if a._needs:
            out.append((a, g))
        if b._needs:
            out.append((b, g))
        return out

    return _make(a.data + b.data, (a, b), grad_fn)


def add_bias(x, b):
    """Row-broadcast bias: (n, d) + (d,)."""
    _require_2d(x, "add_bias")
    if b.data.ndim != 1 or b.shape[0] != x.shape[1]:
        raise ShapeError(f"add_bias: bias shape {b.shape} does not match columns of {x.shape}")

    def grad_fn(g):
        out = []
        if x._needs:
            out.append((x, g))
        if b._needs:
            out.append((b, g.sum(axis=0)))
        return out

    return _make(x.data + b.data[None, :], (x, b), grad_fn)


def mul(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes differ, {a.shape} vs {b.shape}")

    def grad_fn(g):
        out = []
        if a._needs:
            out.append((a, g * b.data))
        if b._needs:
            out.append((b, g * a.data))
        return out

    return _make(a.data * b.data, (a, b), grad_fn)


def scale(x, c):
    c = float(c)

    def grad_fn(g):
        return [(x, g * c)] if x._needs else []

    return _make(x.data * c, (x,), grad_fn)


def sigmoid(x):
    y = expit(x.data)

    def grad_fn(g):
        return [(x, g * y * (1.0 - y))] if x._needs else []

    return _make(y, (x,), grad_fn)


def tanh(x):
    y = np.tanh(x.data)

    def grad_fn(g):
        return [(x, g * (1.0 - y * y))] if x._needs else []

    return _make(y, (x,), grad_fn)


def gelu(x):
    """Exact Gaussian-error-linear unit x * Phi(x)."""
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    y = x.data * cdf

    def grad_fn(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
        return [(x, g * (cdf + x.data * pdf))] if x._needs else []

    return _make(y, (x,), grad_fn)


def softmax_rows(x):
    """Row-wise softmax with per-row max subtraction for stability."""
    _require_2d(x, "softmax_rows")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def grad_fn(g):
        if not x._needs:
            return []
        dot = (g * y).sum(axis=1, keepdims=True)
        return [(x, y * (g - dot))]

    return _make(y, (x,), grad_fn)


def layer_norm(x, gain, bias, eps=1e-12):
    """Per-row normalization (population variance, eps inside the root)."""
    _require_2d(x, "layer_norm")
    d = x.shape[1]
    if d < 1:
        raise ShapeError("layer_norm needs at least one column")
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"layer_norm: gain {gain.shape} / bias {bias.shape} must both be ({d},)"
        )
    mu = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    y = xhat * gain.data[None, :] + bias.data[None, :]

    def grad_fn(g):
        out = []
        if x._needs:
            gh = g * gain.data[None, :]
            term = gh - gh.mean(axis=1, keepdims=True) - xhat * (gh * xhat).mean(axis=1, keepdims=True)
            out.append((x, term * inv))
        if gain._needs:
            out.append((gain, (g * xhat).sum(axis=0)))
        if bias._needs:
            out.append((bias, g.sum(axis=0)))
        return out

    return _make(y, (x, gain, bias), grad_fn)


def dropout(x, rate, training, rng):
    """Inverted dropout: survivors are scaled by 1/(1-rate) at train time.

    ``training=False`` (or rate 0) returns the input tensor unchanged, so
    inference is a pure identity.
    """
    rate = float(rate)
    if rate < 0.0 or rate >= 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)

    def grad_fn(g):
        return [(x, g * keep)] if x._needs else []

    return _make(x.data * keep, (x,), grad_fn)


def cross_entropy(logits, targets, ignore=()):
    """Mean negative log-probability of targets over non-ignored positions.

    Computed from logits through a shifted log-softmax; ``ignore`` holds row
    indices excluded from the mean (padding / boundary tokens).
    """
    _require_2d(logits, "cross_entropy")
    n, vocab = logits.shape
    targets = list(targets)
    if len(targets) != n:
        raise ShapeError(f"cross_entropy: {len(targets)} targets for {n} logit rows")
    for i, t in enumerate(targets):
        if not 0 <= int(t) < vocab:
            raise InputError(f"target id {t} at position {i} outside vocabulary of size {vocab}")
    ignore = set(int(i) for i in ignore)
    for i in ignore:
        if not 0 <= i < n:
            raise InputError(f"ignored position {i} outside sequence of length {n}")
    keep = np.array([i for i in range(n) if i not in ignore], dtype=int)
    if keep.size == 0:
        raise InputError("cross_entropy: every position is ignored")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    tgt = np.array(targets, dtype=int)
    picked = logp[keep, tgt[keep]]
    value = np.asarray(-picked.mean())

    def grad_fn(g):
        if not logits._needs:
            return []
        gl = np.zeros_like(logits.data)
        soft = np.exp(logp[keep])
        soft[np.arange(keep.size), tgt[keep]] -= 1.0
        gl[keep] = soft * (_scalar(g) / keep.size)
        return [(logits, gl)]

    return _make(value, (logits,), grad_fn)


def mean_rows(x, rows=None):
    """Mean over selected rows (default: all) -> (1, d)."""
    _require_2d(x, "mean_rows")
    idx = np.arange(x.shape[0]) if rows is None else np.array(list(rows), dtype=int)
    if idx.size == 0:
        raise InputError("mean_rows over an empty row set")
    y = x.data[idx].mean(axis=0, keepdims=True)

    def grad_fn(g):
        if not x._needs:
            return []
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, np.broadcast_to(g / idx.size, (idx.size, x.shape[1])))
        return [(x, gx)]

    return _make(y, (x,), grad_fn)


def sum_rows(x):
    """Column-preserving sum over all rows -> (1, d)."""
    _require_2d(x, "sum_rows")
    y = x.data.sum(axis=0, keepdims=True)

    def grad_fn(g):
        if not x._needs:
            return []
        return [(x, np.broadcast_to(g, x.shape).copy())]

    return _make(y, (x,), grad_fn)


def row_sums(x):
    """Row-preserving sum over columns -> (n, 1)."""
    _require_2d(x, "row_sums")
    y = x.data.sum(axis=1, keepdims=True)

    def grad_fn(g):
        if not x._needs:
            return []
        return [(x, np.broadcast_to(g, x.shape).copy())]

    return _make(y, (x,), grad_fn)


def tile_rows(x, n):
    """Repeat a (1, d) row n times -> (n, d)."""
    if x.data.ndim != 2 or x.shape[0] != 1:
        raise ShapeError(f"tile_rows needs shape (1, d), got {x.shape}")
    y = np.repeat(x.data, int(n), axis=0)

    def grad_fn(g):
        return [(x, g.sum(axis=0, keepdims=True))] if x._needs else []

    return _make(y, (x,), grad_fn)


def scale_rows(x, col):
    """Broadcast a per-row (n, 1) factor across the columns of (n, d)."""
    _require_2d(x, "scale_rows")
    if col.data.ndim != 2 or col.shape != (x.shape[0], 1):
        raise ShapeError(f"scale_rows: factor shape {col.shape} must be ({x.shape[0]}, 1)")

    def grad_fn(g):
        out = []
        if x._needs:
            out.append((x, g * col.data))
        if col._needs:
            out.append((col, (g * x.data).sum(axis=1, keepdims=True)))
        return out

    return _make(x.data * col.data, (x, col), grad_fn)


def concat_cols(tensors):
    """Concatenate along the hidden axis: [(n, d1), (n, d2), ...] -> (n, sum d)."""
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat_cols of nothing")
    n = tensors[0].shape[0]
    for t in tensors:
        _require_2d(t, "concat_cols")
        if t.shape[0] != n:
            raise ShapeError(f"concat_cols: row counts differ, {t.shape} vs ({n}, ...)")
    widths = [t.shape[1] for t in tensors]
    y = np.concatenate([t.data for t in tensors], axis=1)

    def grad_fn(g):
        out = []
        start = 0
        for t, w in zip(tensors, widths):
            if t._needs:
                out.append((t, g[:, start:start + w]))
            start += w
        return out

    return _make(y, tuple(tensors), grad_fn)


def stack_rows(tensors):
    """Concatenate along the sequence axis: [(n1, d), (n2, d), ...] -> (sum n, d)."""
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("stack_rows of nothing")
    d = tensors[0].shape[1]
    for t in tensors:
        _require_2d(t, "stack_rows")
        if t.shape[1] != d:
            raise ShapeError(f"stack_rows: column counts differ, {t.shape} vs (..., {d})")
    heights = [t.shape[0] for t in tensors]
    y = np.concatenate([t.data for t in tensors], axis=0)

    def grad_fn(g):
        out = []
        start = 0
        for t, h in zip(tensors, heights):
            if t._needs:
                out.append((t, g[start:start + h]))
            start += h
        return out

    return _make(y, tuple(tensors), grad_fn)


def gather_rows(table, ids):
    """Row lookup (embedding); gradients scatter-add back into the table."""
    _require_2d(table, "gather_rows")
    idx = np.array(list(ids), dtype=int)
    rows = table.shape[0]
    for i, t in enumerate(idx):
        if not 0 <= t < rows:
            raise InputError(f"row id {t} at position {i} outside table of {rows} rows")
    y = table.data[idx] if idx.size else np.zeros((0, table.shape[1]))

    def grad_fn(g):
        if not table._needs:
            return []
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return [(table, gt)]

    return _make(y, (table,), grad_fn)


def affine(x, w, b):
    """x @ w + b with a row-broadcast bias."""
    return add_bias(matmul(x, w), b)


def sum_all(x):
    """Sum of every element -> scalar."""
    y = np.asarray(x.data.sum())

    def grad_fn(g):
        return [(x, np.full_like(x.data, _scalar(g)))] if x._needs else []

    return _make(y, (x,), grad_fn)
