"""Minimal reverse-mode automatic differentiation over dense float64 tensors.

Operations executed while a :class:`Graph` is active are recorded on an
append-only tape; :func:`backward` replays the tape in reverse to accumulate
gradients.  Everything is float64 and single-threaded by design -- a Graph
must stay confined to one worker.
"""

from __future__ import annotations

import json
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Graph",
    "ShapeError",
    "backward",
    "add", "sub", "mul", "div", "neg", "matmul",
    "tanh", "sigmoid", "exp", "log", "sqrt", "square", "absolute",
    "clip", "concat", "reshape", "mean", "tsum",
    "dropout", "dropout_mask", "apply_mask",
    "save_params", "load_params",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an operation."""


class Tensor:
    """A dense float64 array, optionally tracked on the active Graph.

    ``requires_grad`` marks leaf tensors (parameters) whose gradients should
    be kept after :func:`backward`.  Intermediate results are tracked
    automatically while a Graph is active.
    """

    __slots__ = ("values", "requires_grad", "grad", "_graph")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._graph: Graph | None = None  # graph that produced this tensor

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        return self.values.item()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; scalars and arrays are wrapped as constants
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def __getitem__(self, idx):
        return _slice(self, idx)

    def backward(self) -> None:
        backward(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Graph:
    """Append-only tape of recorded operations.

    Nodes are stored in construction order, so a single reverse sweep visits
    every node exactly once in valid topological order.  The tape is freed
    after one backward pass; build a fresh Graph per forward/backward cycle.
    """

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._freed = False

    def __enter__(self) -> "Graph":
        _GRAPH_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _GRAPH_STACK.pop()

    def _record(self, out: Tensor, inputs: tuple[Tensor, ...],
                backward_fn: Callable) -> None:
        if self._freed:
            raise RuntimeError("graph already freed by a backward pass")
        out._graph = self
        self._nodes.append((out, inputs, backward_fn))

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` buffers with d(loss)/d(tensor), then free the tape.

        Gradients of tensors reused in several places accumulate by summation.
        Leaf tensors with ``requires_grad=False`` never receive a gradient.
        """
        if loss.values.size != 1:
            raise ValueError(
                f"backward requires a scalar loss, got shape {loss.shape}")
        if loss._graph is not self:
            raise ValueError("loss tensor was not produced on this graph")
        loss.grad = np.ones_like(loss.values)
        for out, inputs, backward_fn in reversed(self._nodes):
            if out.grad is None:
                continue
            grads = backward_fn(out.grad)
            for inp, g in zip(inputs, grads):
                if g is None:
                    continue
                if inp._graph is not self and not inp.requires_grad:
                    continue  # constant leaf: no-grad leakage
                if inp.grad is None:
                    inp.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
                else:
                    inp.grad = inp.grad + g
        self._nodes.clear()
        self._freed = True


_GRAPH_STACK: list[Graph] = []


def _active_graph() -> Graph | None:
    return _GRAPH_STACK[-1] if _GRAPH_STACK else None


def backward(loss: Tensor) -> None:
    """Run the reverse sweep for ``loss`` on the graph that produced it."""
    if loss._graph is None:
        raise ValueError("loss was not recorded on any graph "
                         "(build it inside a `with Graph():` block)")
    loss._graph.backward(loss)


def _tracked(t: Tensor, g: Graph | None) -> bool:
    return t.requires_grad or t._graph is g


def _make(out_values: np.ndarray, inputs: tuple[Tensor, ...],
          backward_fn: Callable) -> Tensor:
    out = Tensor(out_values)
    g = _active_graph()
    if g is not None and any(_tracked(t, g) for t in inputs):
        g._record(out, inputs, backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum-reduce a broadcast gradient back down to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    return _make(a.values + b.values, (a, b), lambda g: (
        _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _make(a.values - b.values, (a, b), lambda g: (
        _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _make(a.values * b.values, (a, b), lambda g: (
        _unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)))


def div(a: Tensor, b: Tensor) -> Tensor:
    return _make(a.values / b.values, (a, b), lambda g: (
        _unbroadcast(g / b.values, a.shape),
        _unbroadcast(-g * a.values / (b.values * b.values), b.shape)))


def neg(a: Tensor) -> Tensor:
    return _make(-a.values, (a,), lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    return _make(a.values @ b.values, (a, b), lambda g: (
        g @ b.values.T, a.values.T @ g))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.values)
    return _make(t, (a,), lambda g: (g * (1.0 - t * t),))


def sigmoid(a: Tensor) -> Tensor:
    # exp(-|x|) never overflows
    e = np.exp(-np.abs(a.values))
    s = np.asarray(np.where(a.values >= 0, 1.0 / (1.0 + e), e / (1.0 + e)))
    return _make(s, (a,), lambda g: (g * s * (1.0 - s),))


def exp(a: Tensor) -> Tensor:
    e = np.exp(a.values)
    return _make(e, (a,), lambda g: (g * e,))


def log(a: Tensor) -> Tensor:
    return _make(np.log(a.values), (a,), lambda g: (g / a.values,))


def sqrt(a: Tensor) -> Tensor:
    r = np.sqrt(a.values)
    return _make(r, (a,), lambda g: (g / (2.0 * r),))


def square(a: Tensor) -> Tensor:
    return _make(a.values * a.values, (a,), lambda g: (g * 2.0 * a.values,))


def absolute(a: Tensor) -> Tensor:
    # subgradient at 0 is 0
    return _make(np.abs(a.values), (a,), lambda g: (g * np.sign(a.values),))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient passes through where unclipped."""
    inside = (a.values >= lo) & (a.values <= hi)
    return _make(np.clip(a.values, lo, hi), (a,), lambda g: (g * inside,))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate([t.values for t in tensors], axis=axis),
                 tensors, back)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = a.shape
    return _make(a.values.reshape(shape), (a,), lambda g: (g.reshape(old),))


def _slice(a: Tensor, idx) -> Tensor:
    def back(g):
        buf = np.zeros_like(a.values)
        np.add.at(buf, idx, g)
        return (buf,)

    return _make(a.values[idx], (a,), back)


def mean(a: Tensor) -> Tensor:
    n = a.values.size
    return _make(np.asarray(a.values.mean()), (a,),
                 lambda g: (np.full_like(a.values, float(g) / n),))


def tsum(a: Tensor) -> Tensor:
    return _make(np.asarray(a.values.sum()), (a,),
                 lambda g: (np.full_like(a.values, float(g)),))


# ---------------------------------------------------------------------------
# dropout


def dropout_mask(shape: tuple[int, ...], rate: float,
                 rng: np.random.Generator) -> np.ndarray:
    """Sample an inverted-dropout mask: 0 with probability ``rate``,
    else 1/(1-rate).  Sample once and reuse per step for variational mode."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def apply_mask(x: Tensor, mask: np.ndarray) -> Tensor:
    return mul(x, Tensor(mask))


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None = None,
            training: bool = True) -> Tensor:
    """Per-step inverted dropout; identity at inference or rate 0."""
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    return apply_mask(x, dropout_mask(x.shape, rate, rng))


# ---------------------------------------------------------------------------
# checkpoint serialisation: name -> shape + row-major values


def save_params(params: dict[str, Tensor], path) -> None:
    blob = {
        name: {"shape": list(t.shape), "values": t.values.ravel().tolist()}
        for name, t in params.items()
    }
    with open(path, "w") as fh:
        json.dump(blob, fh)


def load_params(path) -> dict[str, Tensor]:
    with open(path) as fh:
        blob = json.load(fh)
    return {
        name: Tensor(np.asarray(rec["values"]).reshape(rec["shape"]),
                     requires_grad=True)
        for name, rec in blob.items()
    }
