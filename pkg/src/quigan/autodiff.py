"""Reverse-mode automatic differentiation over float64 numpy arrays.

A small dynamic-graph tensor engine in the micrograd style, sized for the
networks in this package (MLPs on batches of a few thousand values). Two
properties matter here and shaped the design:

* Backward closures build their outputs out of engine ops, so a gradient is
  itself a differentiable graph node. That makes ``grad(...)`` results
  re-differentiable, which the critic's gradient-penalty term needs (it
  backpropagates through a gradient).
* Everything is float64 and free of hidden randomness, so repeated runs are
  bit-identical.

Only basic (slice/int) indexing is supported by ``__getitem__``.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Tensor", "grad", "custom_op", "glorot_uniform"]


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Tensor:
    """Array node in a dynamically built computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad: Tensor | None = None
        self.requires_grad = bool(requires_grad)
        # _backward maps an upstream grad Tensor to [(child, contribution)].
        self._backward = None
        self._prev: tuple[Tensor, ...] = ()

    # ------------------------------------------------------------------
    # conveniences
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    @staticmethod
    def _lift(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    # ------------------------------------------------------------------
    # arithmetic
    def __add__(self, other):
        other = Tensor._lift(other)
        out = _node(self.data + other.data, (self, other))
        if out._prev:
            out._backward = lambda g: [
                (self, _unbroadcast(g, self.shape)),
                (other, _unbroadcast(g, other.shape)),
            ]
        return out

    __radd__ = __add__

    def __sub__(self, other):
        other = Tensor._lift(other)
        out = _node(self.data - other.data, (self, other))
        if out._prev:
            out._backward = lambda g: [
                (self, _unbroadcast(g, self.shape)),
                (other, _unbroadcast(-g, other.shape)),
            ]
        return out

    def __rsub__(self, other):
        return Tensor._lift(other) - self

    def __mul__(self, other):
        other = Tensor._lift(other)
        out = _node(self.data * other.data, (self, other))
        if out._prev:
            out._backward = lambda g: [
                (self, _unbroadcast(g * other, self.shape)),
                (other, _unbroadcast(g * self, other.shape)),
            ]
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._lift(other)
        out = _node(self.data / other.data, (self, other))
        if out._prev:
            out._backward = lambda g: [
                (self, _unbroadcast(g / other, self.shape)),
                (other, _unbroadcast(-(g * out) / other, other.shape)),
            ]
        return out

    def __rtruediv__(self, other):
        return Tensor._lift(other) / self

    def __neg__(self):
        out = _node(-self.data, (self,))
        if out._prev:
            out._backward = lambda g: [(self, -g)]
        return out

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("exponent must be a Python scalar")
        p = float(exponent)
        out = _node(self.data ** p, (self,))
        if out._prev:
            out._backward = lambda g: [(self, g * (self ** (p - 1.0)) * p)]
        return out

    def __matmul__(self, other):
        other = Tensor._lift(other)
        if self.ndim != 2 or other.ndim != 2:
            raise ValueError("matmul supports 2-D operands only")
        out = _node(self.data @ other.data, (self, other))
        if out._prev:
            out._backward = lambda g: [
                (self, g @ other.t()),
                (other, self.t() @ g),
            ]
        return out

    # ------------------------------------------------------------------
    # shape ops
    def t(self) -> "Tensor":
        if self.ndim != 2:
            raise ValueError("t() is for 2-D tensors")
        out = _node(self.data.T, (self,))
        if out._prev:
            out._backward = lambda g: [(self, g.t())]
        return out

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        out = _node(self.data.reshape(shape), (self,))
        if out._prev:
            out._backward = lambda g: [(self, g.reshape(old))]
        return out

    def __getitem__(self, index) -> "Tensor":
        out = _node(self.data[index], (self,))
        if out._prev:
            out._backward = lambda g: [(self, _scatter(g, index, self.shape))]
        return out

    # ------------------------------------------------------------------
    # reductions
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out = _node(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out._prev:
            kept = _kept_shape(self.shape, axis)

            def backward(g):
                gk = g if keepdims or axis is None else g.reshape(kept)
                return [(self, gk * Tensor(np.ones(self.shape)))]

            out._backward = backward
        return out

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        count = self.size if axis is None else _axis_count(self.shape, axis)
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def max(self, axis=None, keepdims: bool = False) -> "Tensor":
        data = self.data.max(axis=axis, keepdims=keepdims)
        out = _node(data, (self,))
        if out._prev:
            kept = _kept_shape(self.shape, axis)
            peak = self.data.max(axis=axis, keepdims=True)
            mask = (self.data == peak).astype(np.float64)
            mask /= mask.sum(axis=axis, keepdims=True)  # ties share the grad

            def backward(g):
                gk = g if keepdims or axis is None else g.reshape(kept)
                return [(self, gk * Tensor(mask))]

            out._backward = backward
        return out

    # ------------------------------------------------------------------
    # elementwise nonlinearities
    def exp(self) -> "Tensor":
        out = _node(np.exp(self.data), (self,))
        if out._prev:
            out._backward = lambda g: [(self, g * out)]
        return out

    def log(self) -> "Tensor":
        out = _node(np.log(self.data), (self,))
        if out._prev:
            out._backward = lambda g: [(self, g / self)]
        return out

    def sqrt(self) -> "Tensor":
        out = _node(np.sqrt(self.data), (self,))
        if out._prev:
            # Clamp only the reciprocal; the forward stays exact.
            safe = np.maximum(out.data, 1e-150)
            out._backward = lambda g: [(self, g * Tensor(0.5 / safe))]
        return out

    def tanh(self) -> "Tensor":
        out = _node(np.tanh(self.data), (self,))
        if out._prev:
            out._backward = lambda g: [(self, g * (1.0 - out * out))]
        return out

    def sigmoid(self) -> "Tensor":
        out = _node(_sigmoid(self.data), (self,))
        if out._prev:
            out._backward = lambda g: [(self, g * out * (1.0 - out))]
        return out

    def softplus(self) -> "Tensor":
        x = self.data
        data = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
        out = _node(data, (self,))
        if out._prev:
            out._backward = lambda g: [(self, g * self.sigmoid())]
        return out

    def leaky_relu(self, negative_slope: float = 0.2) -> "Tensor":
        factor = np.where(self.data > 0.0, 1.0, negative_slope)
        out = _node(self.data * factor, (self,))
        if out._prev:
            out._backward = lambda g: [(self, g * Tensor(factor))]
        return out

    # ------------------------------------------------------------------
    # backprop
    def backward(self, gradient=None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``.grad``."""
        if not self.requires_grad:
            raise ValueError(
                "backward() on a tensor that does not require grad; "
                "build the graph from tensors with requires_grad=True first"
            )
        if gradient is None:
            if self.size != 1:
                raise ValueError("backward() on a non-scalar needs an explicit gradient")
            gradient = Tensor(np.ones_like(self.data))
        order = _topo_order(self)
        grads = _backprop(order, self, Tensor._lift(gradient))
        for node in order:
            if node.requires_grad and node._backward is None:
                g = grads.get(id(node))
                if g is not None:
                    node.grad = g if node.grad is None else node.grad + g


def grad(output: Tensor, inputs, gradient=None) -> list[Tensor]:
    """Gradients of ``output`` w.r.t. ``inputs`` without touching ``.grad``.

    The returned tensors stay attached to the graph, so expressions built from
    them can be differentiated again (second-order gradients). Inputs the
    output does not depend on get zeros.
    """
    inputs = list(inputs)
    if gradient is None:
        if output.size != 1:
            raise ValueError("grad() on a non-scalar output needs an explicit gradient")
        gradient = Tensor(np.ones_like(output.data))
    order = _topo_order(output)
    grads = _backprop(order, output, Tensor._lift(gradient))
    return [grads.get(id(t)) or Tensor(np.zeros(t.shape)) for t in inputs]


def custom_op(data, children, backward) -> Tensor:
    """Graph node for a hand-written primitive.

    ``backward(g)`` must return ``[(child, contribution), ...]``. If the
    contributions are constant tensors the node is first-order only, which is
    fine for primitives that never sit under a second differentiation.
    """
    out = _node(_as_array(data), tuple(children))
    if out._prev:
        out._backward = backward
    return out


# ----------------------------------------------------------------------
# graph internals


def _node(data: np.ndarray, children: tuple[Tensor, ...]) -> Tensor:
    out = Tensor(data)
    if any(c.requires_grad for c in children):
        out.requires_grad = True
        out._prev = children
    return out


def _topo_order(root: Tensor) -> list[Tensor]:
    """Children-before-parents ordering via iterative post-order DFS."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for child in node._prev:
            if id(child) not in seen:
                stack.append((child, False))
    return order


def _backprop(order: list[Tensor], root: Tensor, seed: Tensor) -> dict[int, Tensor]:
    grads: dict[int, Tensor] = {id(root): seed}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node._backward is None:
            continue
        for child, contribution in node._backward(g):
            if not child.requires_grad:
                continue
            held = grads.get(id(child))
            grads[id(child)] = contribution if held is None else held + contribution
    return grads


def _unbroadcast(g: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Reduce a broadcasted gradient back to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    squeezed = tuple(
        i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1
    )
    if squeezed:
        g = g.sum(axis=squeezed, keepdims=True)
    if g.shape != shape:
        g = g.reshape(shape)
    return g


def _scatter(g: Tensor, index, shape: tuple[int, ...]) -> Tensor:
    """Embed ``g`` into a zero tensor of ``shape`` at ``index`` (basic indexing)."""
    data = np.zeros(shape)
    data[index] = g.data
    out = _node(data, (g,))
    if out._prev:
        out._backward = lambda gg: [(g, gg[index])]
    return out


def _kept_shape(shape: tuple[int, ...], axis) -> tuple[int, ...]:
    if axis is None:
        return (1,) * len(shape)
    axes = axis if isinstance(axis, tuple) else (axis,)
    axes = tuple(a % len(shape) for a in axes)
    return tuple(1 if i in axes else n for i, n in enumerate(shape))


def _axis_count(shape: tuple[int, ...], axis) -> int:
    axes = axis if isinstance(axis, tuple) else (axis,)
    count = 1
    for a in axes:
        count *= shape[a % len(shape)]
    return count


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))  # never overflows
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


# ----------------------------------------------------------------------
# parameter initialization


def glorot_uniform(rng: np.random.Generator, n_in: int, n_out: int) -> np.ndarray:
    """Glorot/Xavier uniform draw of an (n_in, n_out) weight matrix."""
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_in, n_out))
