"""Reverse-mode autodiff over numpy float64 arrays.

Every primitive records its parents and a backward rule written in terms of
other primitives.  Running the backward pass with ``create_graph=True`` therefore
records the gradient computation itself, which is what the gradient penalty
needs (a loss that contains an input-gradient norm).

Nodes carry a monotonically increasing ``node_id``; since parents are always
created before their children, sorting reachable nodes by ``node_id`` gives a
valid topological order.  That ordering is the tape.
"""
from __future__ import annotations

import contextlib
import itertools
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import Disconnected, NotScalar, NumericalFault, ShapeMismatch

_node_counter = itertools.count()
_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


@contextlib.contextmanager
def enable_grad(mode: bool = True):
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, mode
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "parents", "backward_fn", "op", "node_id")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericalFault("non-finite value in tensor input")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.parents: tuple[Tensor, ...] = ()
        self.backward_fn: Callable | None = None
        self.op = "leaf"
        self.node_id = next(_node_counter)

    # -- introspection --------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    # -- operators -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def backward(self):
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NumericalFault(f"non-finite output from {op}")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    out.node_id = next(_node_counter)
    track = _grad_enabled and any(p.requires_grad for p in parents)
    out.requires_grad = track
    if track:
        out.parents = tuple(parents)
        out.backward_fn = backward_fn
    else:
        out.parents = ()
        out.backward_fn = None
    return out


def _broadcast_shape(a: tuple, b: tuple, op: str) -> tuple:
    try:
        return np.broadcast_shapes(a, b)
    except ValueError:
        raise ShapeMismatch(f"{op}: cannot broadcast {a} with {b}") from None


# ---------------------------------------------------------------------------
# shape plumbing
# ---------------------------------------------------------------------------

def sum_to(x: Tensor, shape: tuple) -> Tensor:
    """Sum a broadcast result back down to ``shape``."""
    shape = tuple(shape)
    if x.shape == shape:
        return x
    lead = x.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        i + lead for i, s in enumerate(shape) if s == 1 and x.shape[i + lead] != 1
    )
    data = x.data.sum(axis=axes, keepdims=True)
    if lead:
        data = data.reshape(data.shape[lead:])
    src = x.shape
    return _node(data, (x,), lambda g: (broadcast_to(g, src),), "sum_to")


def broadcast_to(x: Tensor, shape: tuple) -> Tensor:
    shape = tuple(shape)
    if x.shape == shape:
        return x
    try:
        data = np.broadcast_to(x.data, shape).copy()
    except ValueError:
        raise ShapeMismatch(f"broadcast_to: {x.shape} -> {shape}") from None
    src = x.shape
    return _node(data, (x,), lambda g: (sum_to(g, src),), "broadcast_to")


def reshape(x: Tensor, shape) -> Tensor:
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch(f"reshape: {x.shape} -> {shape}") from None
    src = x.shape
    return _node(data, (x,), lambda g: (reshape(g, src),), "reshape")


def swapaxes(x: Tensor, a: int = -1, b: int = -2) -> Tensor:
    data = np.swapaxes(x.data, a, b)
    return _node(data, (x,), lambda g: (swapaxes(g, a, b),), "swapaxes")


def transpose(x: Tensor) -> Tensor:
    return swapaxes(x, -1, -2)


# ---------------------------------------------------------------------------
# arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "add")
    sa, sb = a.shape, b.shape
    return _node(a.data + b.data, (a, b), lambda g: (sum_to(g, sa), sum_to(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "sub")
    sa, sb = a.shape, b.shape
    return _node(a.data - b.data, (a, b), lambda g: (sum_to(g, sa), neg(sum_to(g, sb))), "sub")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g: (neg(g),), "neg")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "mul")
    sa, sb = a.shape, b.shape

    def back(g):
        return sum_to(mul(g, b), sa), sum_to(mul(g, a), sb)

    return _node(a.data * b.data, (a, b), back, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape, "div")
    if np.any(b.data == 0):
        raise NumericalFault("division by zero")
    sa, sb = a.shape, b.shape

    def back(g):
        ga = div(g, b)
        gb = neg(div(mul(g, a), square(b)))
        return sum_to(ga, sa), sum_to(gb, sb)

    return _node(a.data / b.data, (a, b), back, "div")


def square(a) -> Tensor:
    a = as_tensor(a)
    return _node(a.data * a.data, (a,), lambda g: (mul(g, mul(a, 2.0)),), "square")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise NumericalFault("sqrt of negative value")
    out_data = np.sqrt(a.data)

    def back(g):
        return (div(g, mul(out, 2.0)),)

    out = _node(out_data, (a,), back, "sqrt")
    return out


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatch("matmul needs operands of rank >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    sa, sb = a.shape, b.shape

    def back(g):
        return sum_to(matmul(g, transpose(b)), sa), sum_to(matmul(transpose(a), g), sb)

    return _node(np.matmul(a.data, b.data), (a, b), back, "matmul")


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    data = x.data.sum(axis=axes, keepdims=keepdims)
    src = x.shape
    kept = tuple(1 if i in axes else s for i, s in enumerate(src))

    def back(g):
        return (broadcast_to(reshape(g, kept), src),)

    return _node(np.asarray(data, dtype=np.float64), (x,), back, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return mul(sum_(x, axes, keepdims), 1.0 / count)


def l2_norm(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    """Euclidean norm over ``axis``.  The gradient at a zero vector is taken as 0."""
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    nk = np.sqrt((x.data * x.data).sum(axis=axes, keepdims=True))
    data = nk if keepdims else nk.reshape([s for i, s in enumerate(nk.shape) if i not in axes])
    kept = nk.shape

    def back(g):
        safe = np.where(nk == 0, 1.0, 0.0)
        denom = add(reshape(out, kept), safe)
        return (mul(reshape(g, kept), div(x, denom)),)

    out = _node(np.asarray(data, dtype=np.float64), (x,), back, "l2_norm")
    return out


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def tanh(x) -> Tensor:
    x = as_tensor(x)

    def back(g):
        return (mul(g, sub(1.0, square(out))),)

    out = _node(np.tanh(x.data), (x,), back, "tanh")
    return out


def _sigmoid_np(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)

    def back(g):
        return (mul(g, mul(out, sub(1.0, out))),)

    out = _node(_sigmoid_np(x.data), (x,), back, "sigmoid")
    return out


def softplus(x) -> Tensor:
    """log(1 + exp(x)), evaluated without overflow."""
    x = as_tensor(x)
    v = x.data
    data = np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v)))
    return _node(data, (x,), lambda g: (mul(g, sigmoid(x)),), "softplus")


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    mask = np.where(x.data > 0, 1.0, slope)
    return _node(x.data * mask, (x,), lambda g: (mul(g, Tensor(mask)),), "leaky_relu")


# ---------------------------------------------------------------------------
# patch extraction: the two linear maps convolutions are built from
# ---------------------------------------------------------------------------

def _out_hw(h, w, kh, kw, stride, padding):
    return (h + 2 * padding - kh) // stride + 1, (w + 2 * padding - kw) // stride + 1


def unfold(x: Tensor, kh: int, kw: int, stride: int = 1, padding: int = 0) -> Tensor:
    """(N, C, H, W) -> (N, C*kh*kw, oh*ow) sliding-window patches."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeMismatch(f"unfold expects NCHW, got {x.shape}")
    n, c, h, w = x.shape
    oh, ow = _out_hw(h, w, kh, kw, stride, padding)
    if oh < 1 or ow < 1:
        raise ShapeMismatch(f"kernel {kh}x{kw} larger than padded input {x.shape}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols = np.empty((n, c, kh, kw, oh, ow))
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride]
    data = cols.reshape(n, c * kh * kw, oh * ow)
    return _node(data, (x,), lambda g: (fold(g, (h, w), kh, kw, stride, padding),), "unfold")


def fold(cols: Tensor, out_hw: tuple[int, int], kh: int, kw: int, stride: int = 1, padding: int = 0) -> Tensor:
    """Adjoint of :func:`unfold`: scatter-add patches into an (N, C, H, W) image."""
    cols = as_tensor(cols)
    h, w = out_hw
    oh, ow = _out_hw(h, w, kh, kw, stride, padding)
    n, ckk, length = cols.shape
    if ckk % (kh * kw) or length != oh * ow:
        raise ShapeMismatch(f"fold: cols {cols.shape} incompatible with {out_hw}, kernel {kh}x{kw}")
    c = ckk // (kh * kw)
    cd = cols.data.reshape(n, c, kh, kw, oh, ow)
    hp, wp = h + 2 * padding, w + 2 * padding
    out = np.zeros((n, c, hp, wp))
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += cd[:, :, i, j]
    if padding:
        out = out[:, :, padding:padding + h, padding:padding + w]
    data = np.ascontiguousarray(out)
    return _node(data, (cols,), lambda g: (unfold(g, kh, kw, stride, padding),), "fold")


# ---------------------------------------------------------------------------
# gradient computation
# ---------------------------------------------------------------------------

def _topo(output: Tensor) -> list[Tensor]:
    seen = {}
    stack = [output]
    while stack:
        t = stack.pop()
        if id(t) in seen or not t.requires_grad:
            continue
        seen[id(t)] = t
        stack.extend(t.parents)
    return sorted(seen.values(), key=lambda t: t.node_id, reverse=True)


def grad(output: Tensor, wrt: Sequence[Tensor], create_graph: bool = False,
         allow_unused: bool = False) -> list[Tensor]:
    """Gradients of scalar ``output`` w.r.t. each tensor in ``wrt``.

    With ``create_graph`` the returned tensors are themselves on the tape and can
    be differentiated again.  Tensors that ``output`` does not depend on raise
    :class:`Disconnected` unless ``allow_unused`` (then a zero tensor is returned).
    """
    if output.size != 1:
        raise NotScalar(f"gradient needs a scalar output, got shape {output.shape}")
    order = _topo(output)
    wanted = {id(t) for t in wrt}
    grads: dict[int, Tensor] = {}
    with enable_grad(create_graph):
        grads[id(output)] = Tensor(np.ones(output.shape))
        for node in order:
            g = grads.get(id(node))
            if g is None or node.backward_fn is None:
                continue
            if id(node) not in wanted:
                # interior node: release its gradient once propagated
                del grads[id(node)]
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                prev = grads.get(id(parent))
                grads[id(parent)] = pg if prev is None else add(prev, pg)
    result = []
    for t in wrt:
        g = grads.get(id(t))
        if g is None:
            if not allow_unused:
                raise Disconnected("tensor does not participate in the output's graph")
            g = Tensor(np.zeros(t.shape))
        result.append(g)
    return result


def grad_with_tape(output: Tensor, wrt: Tensor) -> Tensor:
    """First-order gradient that stays differentiable (double backprop)."""
    if not wrt.requires_grad:
        raise Disconnected("wrt does not require grad")
    return grad(output, [wrt], create_graph=True)[0]


def backward(output: Tensor) -> None:
    """Accumulate d(output)/d(leaf) into ``leaf.grad`` for every leaf requiring grad."""
    if output.size != 1:
        raise NotScalar(f"backward needs a scalar output, got shape {output.shape}")
    leaves = [t for t in _topo(output) if t.backward_fn is None]
    if not leaves:
        return
    for leaf, g in zip(leaves, grad(output, leaves, allow_unused=True)):
        leaf.grad = g.data.copy() if leaf.grad is None else leaf.grad + g.data


def parameters_grad(output: Tensor, params: Iterable[Tensor]) -> list[np.ndarray]:
    """Plain-array gradients for optimizer use; unused parameters get zeros."""
    params = list(params)
    return [g.data for g in grad(output, params, allow_unused=True)]
