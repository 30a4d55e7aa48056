"""Layer functions composed from core primitives, plus parameter containers."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from ..errors import ConfigError, ShapeMismatch
from .core import (Tensor, add, fold, matmul, mul, reshape, sum_, swapaxes,
                   unfold)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map ``x @ w + b`` with ``w`` of shape (in, out)."""
    out = matmul(x, w)
    return out if b is None else add(out, b)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of NCHW input with an (out, in, kh, kw) kernel."""
    n, c, h, wd = x.shape
    o, ci, kh, kw = w.shape
    if ci != c:
        raise ShapeMismatch(f"conv2d: input has {c} channels, kernel expects {ci}")
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wd + 2 * padding - kw) // stride + 1
    cols = unfold(x, kh, kw, stride, padding)
    out = matmul(reshape(w, (o, ci * kh * kw)), cols)
    if b is not None:
        out = add(out, reshape(b, (1, o, 1)))
    return reshape(out, (n, o, oh, ow))


def conv_transpose2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1,
                     padding: int = 0, output_padding: int = 0) -> Tensor:
    """Transposed convolution; kernel layout (in, out, kh, kw)."""
    n, c, h, wd = x.shape
    ci, o, kh, kw = w.shape
    if ci != c:
        raise ShapeMismatch(f"conv_transpose2d: input has {c} channels, kernel expects {ci}")
    oh = (h - 1) * stride - 2 * padding + kh + output_padding
    ow = (wd - 1) * stride - 2 * padding + kw + output_padding
    wm = swapaxes(reshape(w, (ci, o * kh * kw)), 0, 1)
    cols = matmul(wm, reshape(x, (n, c, h * wd)))
    out = fold(cols, (oh, ow), kh, kw, stride, padding)
    if b is not None:
        out = add(out, reshape(b, (1, o, 1, 1)))
    return out


def max_pool2d(x: Tensor, k: int = 2) -> Tensor:
    """Non-overlapping k×k max pooling; ties go to the first position in the window."""
    n, c, h, w = x.shape
    if h % k or w % k:
        raise ShapeMismatch(f"max_pool2d: {h}x{w} not divisible by {k}")
    blocks = reshape(x, (n, c, h // k, k, w // k, k))
    win = np.moveaxis(blocks.data, 3, 4).reshape(n, c, h // k, w // k, k * k)
    first = np.argmax(win, axis=-1)
    mask = np.zeros_like(win)
    np.put_along_axis(mask, first[..., None], 1.0, axis=-1)
    mask = np.moveaxis(mask.reshape(n, c, h // k, w // k, k, k), 4, 3)
    return sum_(mul(blocks, Tensor(mask)), axis=(3, 5))


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParamSpec:
    name: str
    shape: tuple[int, ...]
    kind: str = "weight"  # "weight" or "bias"


class ParamSet:
    """Named, ordered parameter tensors for one network."""

    def __init__(self, tensors: dict[str, Tensor] | None = None, init_spec=None):
        self._tensors: dict[str, Tensor] = {}
        self.init_spec = tuple(init_spec or ())
        for name, t in (tensors or {}).items():
            self.add(name, t)

    def add(self, name: str, t: Tensor) -> None:
        if name in self._tensors:
            raise ConfigError(f"duplicate parameter name {name!r}")
        t.requires_grad = True
        self._tensors[name] = t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def tensors(self) -> list[Tensor]:
        return list(self._tensors.values())

    def items(self):
        return self._tensors.items()

    def assign(self, name: str, value: np.ndarray) -> None:
        """Replace a parameter's values with a fresh leaf of the same shape."""
        old = self._tensors[name]
        value = np.asarray(value, dtype=np.float64)
        if value.shape != old.shape:
            raise ShapeMismatch(f"{name}: shape {old.shape} is fixed, got {value.shape}")
        self._tensors[name] = Tensor(value, requires_grad=True)

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self._tensors.items()}

    def num_values(self) -> int:
        return sum(t.size for t in self._tensors.values())


def param_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by (seed, stream)."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def init_params(spec: Sequence[ParamSpec], seed: int, std: float = 0.02) -> ParamSet:
    """Weights ~ Normal(0, std²), biases zero.

    Each parameter draws from its own Philox key (seed, index), so the values do not
    depend on how many random numbers anything else consumed.
    """
    ps = ParamSet(init_spec=spec)
    for idx, p in enumerate(spec):
        if p.kind == "bias":
            data = np.zeros(p.shape)
        else:
            data = param_rng(seed, idx).normal(0.0, std, size=p.shape)
        ps.add(p.name, Tensor(data, requires_grad=True))
    return ps
