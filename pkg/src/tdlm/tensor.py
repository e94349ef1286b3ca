"""Minimal dense tensor with reverse-mode automatic differentiation.

Storage is a numpy array (float32 by default, float64 supported for
gradient checking).  Operations record themselves onto the active
:class:`Tape`; replaying the tape in reverse accumulates gradients into
every tensor reachable from the loss.  Only the shapes this model needs
are supported -- there is no generic broadcasting.

Reductions (sums, log-sum-exp) accumulate in 64-bit regardless of the
working dtype.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, NumericError, ConfigError, InvariantError

DEFAULT_DTYPE = np.float32


class Tensor:
    """Dense n-d array with an optional gradient slot.

    ``data`` is stored row-major.  ``grad``, when populated, always has the
    same shape and dtype as ``data``.
    """

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str = ""):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = np.ascontiguousarray(arr)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g: np.ndarray):
        if g.shape != self.data.shape:
            raise ShapeError(f"gradient shape {g.shape} != data shape {self.data.shape}")
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}{tag})"


class Tape:
    """Ordered record of operations for one backward pass.

    Use as a context manager around the forward computation, then call
    :meth:`backward` on the scalar loss.  A tape is confined to one thread.
    With no tape active, operations run forward-only (evaluation mode).
    """

    _active = None

    def __init__(self):
        self._records = []  # (out, parents, backward_fn)

    def __enter__(self):
        if Tape._active is not None:
            raise InvariantError("nested tapes are not supported")
        Tape._active = self
        return self

    def __exit__(self, exc_type, exc, tb):
        Tape._active = None
        return False

    def __len__(self):
        return len(self._records)

    def backward(self, loss: Tensor):
        """Populate gradients of everything ``loss`` depends on.

        Replays backward rules in reverse recording order; each rule sees
        the complete output gradient because all consumers of a tensor were
        recorded after it.  Gradient accumulation is additive across uses.
        """
        if loss.data.shape != ():
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
        loss.grad = np.ones((), dtype=loss.data.dtype)
        for out, parents, backward_fn in reversed(self._records):
            if out.grad is None:
                continue  # not on a path to the loss
            grads = backward_fn(out.grad)
            for parent, g in zip(parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                parent.accumulate_grad(g)


def _record(out: Tensor, parents, backward_fn) -> Tensor:
    tape = Tape._active
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape._records.append((out, parents, backward_fn))
    return out


def _check_same_dtype(*tensors):
    dt = tensors[0].data.dtype
    for t in tensors[1:]:
        if t.data.dtype != dt:
            raise ShapeError(f"mixed dtypes {dt} and {t.data.dtype}")
    return dt


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-d tensors."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.data.shape} x {b.data.shape}")
    _check_same_dtype(a, b)
    out = Tensor(a.data @ b.data)

    def backward(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return _record(out, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose needs a 2-d tensor, got {a.data.shape}")
    out = Tensor(a.data.T.copy())

    def backward(g):
        return (g.T,)

    return _record(out, (a,), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; also accepts a 1-d bias against a 2-d left operand."""
    _check_same_dtype(a, b)
    if a.data.shape == b.data.shape:
        out = Tensor(a.data + b.data)

        def backward(g):
            return g, g

    elif a.data.ndim == 2 and b.data.ndim == 1 and a.data.shape[1] == b.data.shape[0]:
        out = Tensor(a.data + b.data[None, :])

        def backward(g):
            return g, g.sum(axis=0, dtype=np.float64).astype(g.dtype)

    else:
        raise ShapeError(f"add shape mismatch: {a.data.shape} + {b.data.shape}")
    return _record(out, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"sub shape mismatch: {a.data.shape} - {b.data.shape}")
    _check_same_dtype(a, b)
    out = Tensor(a.data - b.data)

    def backward(g):
        return g, -g

    return _record(out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul shape mismatch: {a.data.shape} * {b.data.shape}")
    _check_same_dtype(a, b)
    out = Tensor(a.data * b.data)

    def backward(g):
        ga = g * b.data if a.requires_grad else None
        gb = g * a.data if b.requires_grad else None
        return ga, gb

    return _record(out, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python scalar (no gradient for the scalar)."""
    c = float(c)
    out = Tensor(a.data * a.data.dtype.type(c))

    def backward(g):
        return (g * g.dtype.type(c),)

    return _record(out, (a,), backward)


def mul_const(a: Tensor, const: np.ndarray) -> Tensor:
    """Elementwise product with a constant array (masking)."""
    const = np.asarray(const, dtype=a.data.dtype)
    if const.shape != a.data.shape:
        raise ShapeError(f"mul_const shape mismatch: {a.data.shape} * {const.shape}")
    out = Tensor(a.data * const)

    def backward(g):
        return (g * const,)

    return _record(out, (a,), backward)


def one_minus(a: Tensor) -> Tensor:
    """1 - a, elementwise."""
    out = Tensor(a.data.dtype.type(1.0) - a.data)

    def backward(g):
        return (-g,)

    return _record(out, (a,), backward)


# ---------------------------------------------------------------------------
# activations


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = Tensor(y)

    def backward(g):
        return (g * y * (1.0 - y),)

    return _record(out, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y)

    def backward(g):
        return (g * (1.0 - y * y),)

    return _record(out, (a,), backward)


def softmax(a: Tensor) -> Tensor:
    """Softmax over a 1-d tensor or over each row of a 2-d tensor.

    Max-subtraction keeps the exponentials bounded; the normalizing sum
    accumulates in float64.
    """
    x = a.data
    if not np.all(np.isfinite(x)):
        raise NumericError("softmax input contains non-finite values")
    if x.ndim == 1:
        shifted = x - x.max()
        ex = np.exp(shifted)
        y = (ex / ex.sum(dtype=np.float64)).astype(x.dtype)
    elif x.ndim == 2:
        shifted = x - x.max(axis=1, keepdims=True)
        ex = np.exp(shifted)
        y = (ex / ex.sum(axis=1, keepdims=True, dtype=np.float64)).astype(x.dtype)
    else:
        raise ShapeError(f"softmax needs a 1-d or 2-d tensor, got {x.shape}")
    out = Tensor(y)

    def backward(g):
        if y.ndim == 1:
            dot = np.sum(g * y, dtype=np.float64).astype(g.dtype)
            return (y * (g - dot),)
        dot = np.sum(g * y, axis=1, keepdims=True, dtype=np.float64).astype(g.dtype)
        return (y * (g - dot),)

    return _record(out, (a,), backward)


def cross_entropy_from_logits(logits: Tensor, targets, target_mask=None) -> Tensor:
    """Categorical cross-entropy computed in log space.

    Accepts three layouts:

    * 1-d logits with a single integer target -> scalar loss;
    * 2-d logits ``[m, V]`` with targets ``[m]`` -> per-row losses ``[m]``;
    * 2-d logits ``[m, V]`` with targets ``[m, t]`` -> per-row mean over the
      ``t`` targets, optionally weighted by ``target_mask`` of the same
      shape (rows with an all-zero mask contribute 0).

    The log-sum-exp runs with a float64 accumulator.
    """
    x = logits.data
    single = x.ndim == 1
    if single:
        x2 = x[None, :]
        tgt = np.asarray([targets], dtype=np.int64)[:, None]
    else:
        if x.ndim != 2:
            raise ShapeError(f"cross_entropy needs 1-d or 2-d logits, got {x.shape}")
        tgt = np.asarray(targets, dtype=np.int64)
        if tgt.ndim == 1:
            tgt = tgt[:, None]
        if tgt.ndim != 2 or tgt.shape[0] != x.shape[0]:
            raise ShapeError(f"targets shape {tgt.shape} does not match logits {x.shape}")
        x2 = x
    V = x2.shape[1]
    if tgt.min() < 0 or tgt.max() >= V:
        raise IndexError(f"target id out of range [0, {V}): {int(tgt.min())}..{int(tgt.max())}")
    if target_mask is None:
        mask = np.ones(tgt.shape, dtype=np.float64)
    else:
        mask = np.asarray(target_mask, dtype=np.float64)
        if mask.shape != tgt.shape:
            raise ShapeError(f"target_mask shape {mask.shape} != targets shape {tgt.shape}")

    m = x2.max(axis=1, keepdims=True)
    ex = np.exp(x2 - m)
    sumex = ex.sum(axis=1, dtype=np.float64)
    lse = m[:, 0].astype(np.float64) + np.log(sumex)
    picked = np.take_along_axis(x2.astype(np.float64), tgt, axis=1)
    per_target = lse[:, None] - picked
    denom = np.maximum(mask.sum(axis=1), 1.0)
    per_row = (per_target * mask).sum(axis=1) / denom

    probs = (ex / sumex[:, None]).astype(x.dtype)
    counts = np.zeros_like(x2, dtype=np.float64)
    rows = np.repeat(np.arange(tgt.shape[0]), tgt.shape[1])
    np.add.at(counts, (rows, tgt.ravel()), mask.ravel())
    row_weight = (mask.sum(axis=1) / denom)[:, None]

    if single:
        out = Tensor(np.asarray(per_row[0], dtype=x.dtype))
    else:
        out = Tensor(per_row.astype(x.dtype))

    def backward(g):
        gr = np.asarray(g, dtype=np.float64).reshape(-1, 1)
        dx = gr * (probs.astype(np.float64) * row_weight - counts / denom[:, None])
        dx = dx.astype(x.dtype)
        return (dx[0] if single else dx,)

    return _record(out, (logits,), backward)


# ---------------------------------------------------------------------------
# pooling, dropout, lookup


def max_over_time(a: Tensor):
    """Maximum of a 1-d feature map; gradient routes to the argmax only.

    Ties break toward the lowest index.  Returns ``(value, index)``.
    """
    x = a.data
    if x.ndim != 1 or x.shape[0] == 0:
        raise ShapeError(f"max_over_time needs a non-empty 1-d tensor, got {x.shape}")
    idx = int(np.argmax(x))
    out = Tensor(np.asarray(x[idx]))

    def backward(g):
        gx = np.zeros_like(x)
        gx[idx] = g
        return (gx,)

    return _record(out, (a,), backward), idx


def max_over_time2d(a: Tensor):
    """Column-wise max over axis 0 of ``[w, n]`` -> ``[1, n]`` plus argmax row ids."""
    x = a.data
    if x.ndim != 2 or x.shape[0] == 0:
        raise ShapeError(f"max_over_time2d needs a non-empty 2-d tensor, got {x.shape}")
    idx = np.argmax(x, axis=0)
    cols = np.arange(x.shape[1])
    out = Tensor(x[idx, cols][None, :].copy())

    def backward(g):
        gx = np.zeros_like(x)
        gx[idx, cols] = g[0]
        return (gx,)

    return _record(out, (a,), backward), idx


def dropout(a: Tensor, keep_prob: float, training: bool, rng=None) -> Tensor:
    """Inverted dropout: keep with probability ``keep_prob``, scale by its inverse.

    Evaluation mode is the exact identity (returns the input tensor).
    """
    if not (0.0 < keep_prob <= 1.0):
        raise ConfigError(f"dropout keep_prob must be in (0, 1], got {keep_prob}")
    if not training or keep_prob == 1.0:
        return a
    if rng is None:
        raise InvariantError("training-mode dropout needs an rng")
    mask = (rng.random(a.data.shape) < keep_prob).astype(a.data.dtype)
    mask /= a.data.dtype.type(keep_prob)
    out = Tensor(a.data * mask)

    def backward(g):
        return (g * mask,)

    return _record(out, (a,), backward)


def embed(table: Tensor, ids) -> Tensor:
    """Row lookup into ``table [V, e]``.

    1-d ids ``[m]`` give ``[m, e]``; 2-d ids ``[w, h]`` give the rows of each
    window concatenated, ``[w, h*e]`` (used for convolution unfolding).
    Gradient scatter-adds into the table.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if table.data.ndim != 2:
        raise ShapeError(f"embed table must be 2-d, got {table.data.shape}")
    V, e = table.data.shape
    if ids.size and (ids.min() < 0 or ids.max() >= V):
        raise IndexError(f"embedding id out of range [0, {V})")
    if ids.ndim == 1:
        out = Tensor(table.data[ids])
    elif ids.ndim == 2:
        w, h = ids.shape
        out = Tensor(table.data[ids.ravel()].reshape(w, h * e))
    else:
        raise ShapeError(f"embed ids must be 1-d or 2-d, got {ids.shape}")

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.ravel(), g.reshape(-1, e))
        return (gt,)

    return _record(out, (table,), backward)


# ---------------------------------------------------------------------------
# shape assembly and reductions


def concat_rows(parts) -> Tensor:
    """Stack 2-d tensors along axis 0."""
    parts = list(parts)
    if not parts:
        raise ShapeError("concat_rows needs at least one tensor")
    ncols = parts[0].data.shape[1]
    for p in parts:
        if p.data.ndim != 2 or p.data.shape[1] != ncols:
            raise ShapeError("concat_rows needs 2-d tensors with equal column counts")
    _check_same_dtype(*parts)
    out = Tensor(np.concatenate([p.data for p in parts], axis=0))
    sizes = [p.data.shape[0] for p in parts]

    def backward(g):
        grads = []
        at = 0
        for p, n in zip(parts, sizes):
            grads.append(g[at:at + n] if p.requires_grad else None)
            at += n
        return grads

    return _record(out, tuple(parts), backward)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate two 2-d tensors along axis 1."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[0] != b.data.shape[0]:
        raise ShapeError(f"concat_cols shape mismatch: {a.data.shape} | {b.data.shape}")
    _check_same_dtype(a, b)
    na = a.data.shape[1]
    out = Tensor(np.concatenate([a.data, b.data], axis=1))

    def backward(g):
        return g[:, :na], g[:, na:]

    return _record(out, (a, b), backward)


def sum_rows(a: Tensor) -> Tensor:
    """Sum a 2-d tensor over axis 0 -> ``[1, n]`` (float64 accumulator)."""
    if a.data.ndim != 2:
        raise ShapeError(f"sum_rows needs a 2-d tensor, got {a.data.shape}")
    out = Tensor(a.data.sum(axis=0, dtype=np.float64).astype(a.data.dtype)[None, :])

    def backward(g):
        return (np.broadcast_to(g[0], a.data.shape).copy(),)

    return _record(out, (a,), backward)


def sum_all(a: Tensor) -> Tensor:
    """Sum of all elements -> scalar (float64 accumulator)."""
    out = Tensor(np.asarray(a.data.sum(dtype=np.float64), dtype=a.data.dtype))

    def backward(g):
        return (np.full_like(a.data, g),)

    return _record(out, (a,), backward)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    if n == 0:
        raise ShapeError("mean of an empty tensor")
    out = Tensor(np.asarray(a.data.sum(dtype=np.float64) / n, dtype=a.data.dtype))

    def backward(g):
        return (np.full_like(a.data, g / a.data.dtype.type(n)),)

    return _record(out, (a,), backward)
