"""Small reverse-mode differentiation tape over numpy arrays.

Every primitive below carries a hand-written vector-Jacobian product. Layers in
``presched.forecaster`` are compositions of these primitives, so their
gradients come out of the same tape and are checked against central finite
differences in the test-suite.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

Backward = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Var:
    """A node on the tape: a float64 array plus how to push gradients back."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")
    __array_priority__ = 100.0

    def __init__(
        self,
        value,
        requires_grad: bool = False,
        parents: tuple["Var", ...] = (),
        backward: Backward | None = None,
    ) -> None:
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self) -> str:
        return f"Var(shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf that requires it."""
        if grad is None:
            grad = np.ones_like(self.value)
        order = _topological(self)
        pending: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pg if key not in pending else pending[key] + pg

    # operator sugar
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
        return mul(self, -1.0)

    def __getitem__(self, index):
        return getitem(self, index)


def _topological(root: Var) -> list[Var]:
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def param(x) -> Var:
    """Leaf that collects gradients."""
    return Var(np.array(x, dtype=np.float64, copy=True), requires_grad=True)


def _node(value, parents: tuple[Var, ...], backward: Backward) -> Var:
    needs = any(p.requires_grad for p in parents)
    return Var(value, requires_grad=needs, parents=parents if needs else (), backward=backward if needs else None)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return _node(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return _node(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return _node(
        a.value * b.value,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.value, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.value, b.shape) if b.requires_grad else None,
        ),
    )


def div(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.value / b.value
    return _node(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.value, a.shape) if a.requires_grad else None,
            _unbroadcast(-g * out / b.value, b.shape) if b.requires_grad else None,
        ),
    )


def square(x) -> Var:
    x = as_var(x)
    return _node(x.value**2, (x,), lambda g: (2.0 * x.value * g,))


def power(x, n: int) -> Var:
    x = as_var(x)
    if n == 0:
        return Var(np.ones_like(x.value))
    return _node(x.value**n, (x,), lambda g: (n * x.value ** (n - 1) * g,))


def exp(x) -> Var:
    x = as_var(x)
    out = np.exp(x.value)
    return _node(out, (x,), lambda g: (g * out,))


def tanh(x) -> Var:
    x = as_var(x)
    out = np.tanh(x.value)
    return _node(out, (x,), lambda g: (g * (1.0 - out**2),))


def sigmoid(x) -> Var:
    x = as_var(x)
    out = 0.5 * (1.0 + np.tanh(0.5 * x.value))
    return _node(out, (x,), lambda g: (g * out * (1.0 - out),))


def relu(x) -> Var:
    x = as_var(x)
    mask = x.value > 0
    return _node(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def softplus(x) -> Var:
    x = as_var(x)
    out = np.logaddexp(0.0, x.value)
    return _node(out, (x,), lambda g: (g * 0.5 * (1.0 + np.tanh(0.5 * x.value)),))


def absolute(x) -> Var:
    x = as_var(x)
    return _node(np.abs(x.value), (x,), lambda g: (g * np.sign(x.value),))


def softmax(x, axis: int = -1) -> Var:
    x = as_var(x)
    shifted = x.value - x.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _node(out, (x,), back)


# ---------------------------------------------------------------- reductions


def vsum(x, axis=None, keepdims: bool = False) -> Var:
    x = as_var(x)
    out = x.value.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _node(out, (x,), back)


def mean(x, axis=None, keepdims: bool = False) -> Var:
    x = as_var(x)
    n = x.value.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(vsum(x, axis=axis, keepdims=keepdims), 1.0 / float(n))


# ---------------------------------------------------------------- shape


def reshape(x, shape) -> Var:
    x = as_var(x)
    return _node(x.value.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes) -> Var:
    x = as_var(x)
    inv = np.argsort(axes)
    return _node(np.transpose(x.value, axes), (x,), lambda g: (np.transpose(g, inv),))


def getitem(x, index) -> Var:
    x = as_var(x)

    def back(g):
        full = np.zeros_like(x.value)
        np.add.at(full, index, g)
        return (full,)

    return _node(x.value[index], (x,), back)


def concat(xs: Sequence, axis: int = 0) -> Var:
    xs = tuple(as_var(x) for x in xs)
    sizes = [x.shape[axis] for x in xs]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _node(np.concatenate([x.value for x in xs], axis=axis), xs, back)


def stack(xs: Sequence, axis: int = 0) -> Var:
    xs = tuple(as_var(x) for x in xs)

    def back(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(xs)))

    return _node(np.stack([x.value for x in xs], axis=axis), xs, back)


def pad(x, widths) -> Var:
    """Zero padding; ``widths`` as for ``np.pad``."""
    x = as_var(x)
    sl = tuple(slice(lo, lo + n) for (lo, _), n in zip(widths, x.shape))
    return _node(np.pad(x.value, widths), (x,), lambda g: (g[sl],))


# ---------------------------------------------------------------- contraction


def einsum(subscripts: str, *operands) -> Var:
    """``np.einsum`` with explicit output (``'ij,jk->ik'``)."""
    ops = tuple(as_var(o) for o in operands)
    inputs, output = subscripts.replace(" ", "").split("->")
    in_specs = inputs.split(",")
    out = np.einsum(subscripts, *[o.value for o in ops], optimize=True)

    def back(g):
        grads = []
        for k, (spec, op) in enumerate(zip(in_specs, ops)):
            if not op.requires_grad:
                grads.append(None)
                continue
            others = [(s, o.value) for j, (s, o) in enumerate(zip(in_specs, ops)) if j != k]
            available = set(output).union(*[set(s) for s, _ in others]) if others else set(output)
            target = "".join(c for c in spec if c in available)
            expr = ",".join([output] + [s for s, _ in others]) + "->" + target
            gk = np.einsum(expr, g, *[v for _, v in others], optimize=True)
            if target != spec:
                # indices summed only inside this operand: broadcast back
                shape = [op.shape[i] if c in target else 1 for i, c in enumerate(spec)]
                order = [c for c in spec if c in target]
                perm = [target.index(c) for c in order]
                gk = np.transpose(gk, perm).reshape(shape)
                gk = np.broadcast_to(gk, op.shape).copy()
            grads.append(gk)
        return grads

    return _node(out, ops, back)


def matmul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return _node(
        a.value @ b.value,
        (a, b),
        lambda g: (
            _unbroadcast(g @ np.swapaxes(b.value, -1, -2), a.shape) if a.requires_grad else None,
            _unbroadcast(np.swapaxes(a.value, -1, -2) @ g, b.shape) if b.requires_grad else None,
        ),
    )
