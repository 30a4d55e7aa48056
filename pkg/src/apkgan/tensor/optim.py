"""Bias-corrected Adam over a ParamSet."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericalFault, ShapeMismatch
from .nn import ParamSet


@dataclass
class AdamState:
    alpha: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.9
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: ParamSet, grads: dict[str, np.ndarray] | list[np.ndarray], state: AdamState) -> None:
    """One Adam update, in place on ``params`` and ``state``.

    ``grads`` is either a name->array mapping or a list aligned with ``params.names()``.
    """
    names = params.names()
    if not isinstance(grads, dict):
        grads = dict(zip(names, grads, strict=True))
    state.t += 1
    t = state.t
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name in names:
        p = params[name]
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: gradient {g.shape} vs parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalFault(f"non-finite gradient for {name}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(g)
            v = np.zeros_like(g)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        update = state.alpha * (m / c1) / (np.sqrt(v / c2) + state.eps)
        # parameter tensors are immutable snapshots between steps
        params.assign(name, p.data - update)
