"""Adam optimizer with bias correction, plus global-norm gradient clipping."""

from __future__ import annotations

import numpy as np

from .errors import InvariantError
from .tensor import Tensor


class AdamState:
    """Per-parameter first/second moment arrays and a shared step counter.

    One state instance drives every parameter of a model; the step counter
    increases by exactly 1 per :func:`adam_step` call.
    """

    def __init__(self, params: dict, lr: float = 0.001, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def check_matches(self, params: dict):
        if set(self.m) != set(params):
            raise InvariantError("optimizer state does not cover the same parameters")
        for name, p in params.items():
            if self.m[name].shape != p.data.shape:
                raise InvariantError(f"moment shape mismatch for {name!r}")


def fill_missing_grads(params: dict):
    """Give every parameter a zero gradient if backward left it untouched."""
    for p in params.values():
        if p.grad is None:
            p.grad = np.zeros_like(p.data)


def global_grad_norm(params: dict) -> float:
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    return float(np.sqrt(total))


def clip_global_norm(params: dict, max_norm: float) -> float:
    """Rescale all gradients so their global L2 norm is at most ``max_norm``.

    Returns the pre-clip norm.  ``max_norm <= 0`` disables clipping.
    """
    norm = global_grad_norm(params)
    if max_norm > 0 and norm > max_norm:
        factor = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= p.grad.dtype.type(factor)
    return norm


def adam_step(params: dict, state: AdamState):
    """One Adam update over every parameter; gradients are zeroed afterward.

    Requires a populated gradient on every parameter (use
    :func:`fill_missing_grads` after backward if a sub-task loss does not
    touch all of them).
    """
    for name, p in params.items():
        if p.grad is None:
            raise InvariantError(f"parameter {name!r} has no gradient before adam_step")
    state.check_matches(params)
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = p.grad
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        mhat = m / bc1
        vhat = v / bc2
        p.data -= (state.lr * mhat / (np.sqrt(vhat) + state.eps)).astype(p.data.dtype)
        p.grad = None


def freeze_pad_rows(params: dict, names):
    """Zero the gradient of row 0 for the named tables (frozen pad rows)."""
    for name in names:
        p = params.get(name)
        if p is not None and p.grad is not None:
            p.grad[0, :] = 0.0
