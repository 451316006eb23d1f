"""Dense float64 tensors with a minimal reverse-mode differentiation tape.

The tape is built per forward pass (define-by-run): every operation whose
inputs require gradients records a node holding the input tensors and a
vector-Jacobian callback. ``backward`` walks the recorded nodes in reverse,
accumulating cotangents additively at fan-out, and returns a gradient map
over the leaf tensors. Iterative solvers join the graph through
``register_custom_vjp`` so they can expose an implicit backward rule instead
of being unrolled.

Everything is 64-bit; inputs are coerced on construction.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "GradientMap",
    "backward",
    "register_custom_vjp",
    "PseudoInverse",
    "pinv",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "relu",
    "sin",
    "exp",
    "power",
    "absolute",
    "tensor_sum",
    "mean",
    "amax",
    "clip_max",
    "reshape",
    "take_cols",
]

_TAPE_STACK: list["Tape"] = []


def _active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tensor:
    """A float64 array plus a requires-grad flag.

    Tensors are hashed by identity; the same underlying array wrapped twice
    is two distinct graph nodes.
    """

    __slots__ = ("values", "requires_grad")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    def item(self) -> float:
        return float(self.values)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.values.shape}{flag})"

    # arithmetic sugar; constants are wrapped as non-grad tensors
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

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    __slots__ = ("output", "inputs", "vjp")

    def __init__(self, output, inputs, vjp):
        self.output = output
        self.inputs = inputs
        self.vjp = vjp


class Tape:
    """Ordered record of operations from one forward pass.

    Execution order is a valid topological order, so the reverse sweep visits
    each node exactly once.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def record(self, output: Tensor, inputs: tuple, vjp) -> None:
        self.nodes.append(_Node(output, tuple(inputs), vjp))


class GradientMap:
    """Gradients keyed by leaf tensor; unreached leaves read as zeros."""

    def __init__(self, grads: dict, leaves: list):
        self._grads = grads
        self._leaves = leaves

    def __getitem__(self, t: Tensor) -> np.ndarray:
        g = self._grads.get(id(t))
        if g is None:
            return np.zeros_like(t.values)
        return g

    def __contains__(self, t: Tensor) -> bool:
        return id(t) in self._grads

    def leaves(self) -> list:
        return list(self._leaves)


def backward(tape: Tape, seed, output: Tensor | None = None) -> GradientMap:
    """Reverse sweep over the tape.

    :param seed: cotangent for ``output``; array-like matching its shape.
    :param output: tensor to differentiate; defaults to the last recorded
        output. Gradients flow only to nodes on a path to it.
    """
    if not tape.nodes:
        raise ValueError("empty tape")
    if output is None:
        output = tape.nodes[-1].output
    seed = np.asarray(seed, dtype=np.float64)
    if seed.shape != output.values.shape:
        seed = np.broadcast_to(seed, output.values.shape).astype(np.float64)

    grads: dict[int, np.ndarray] = {id(output): seed}
    produced = {id(node.output) for node in tape.nodes}
    leaves: list[Tensor] = []
    seen_leaf: set[int] = set()
    for node in tape.nodes:
        for t in node.inputs:
            if t.requires_grad and id(t) not in produced and id(t) not in seen_leaf:
                seen_leaf.add(id(t))
                leaves.append(t)

    for node in reversed(tape.nodes):
        g = grads.get(id(node.output))
        if g is None:
            continue
        cots = node.vjp(g)
        for t, c in zip(node.inputs, cots):
            if c is None or not t.requires_grad:
                continue
            k = id(t)
            if k in grads:
                grads[k] = grads[k] + c
            else:
                grads[k] = c

    leaf_grads = {id(t): grads[id(t)] for t in leaves if id(t) in grads}
    return GradientMap(leaf_grads, leaves)


def _record(out: Tensor, inputs: tuple, vjp) -> Tensor:
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        tape.record(out, inputs, vjp)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a cotangent back down to the shape it was broadcast from."""
    g = grad
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.values + b.values, a.requires_grad or b.requires_grad)

    def vjp(g):
        return _unbroadcast(g, a.values.shape), _unbroadcast(g, b.values.shape)

    return _record(out, (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.values - b.values, a.requires_grad or b.requires_grad)

    def vjp(g):
        return _unbroadcast(g, a.values.shape), _unbroadcast(-g, b.values.shape)

    return _record(out, (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.values * b.values, a.requires_grad or b.requires_grad)

    def vjp(g):
        return (
            _unbroadcast(g * b.values, a.values.shape),
            _unbroadcast(g * a.values, b.values.shape),
        )

    return _record(out, (a, b), vjp)


def div(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.values / b.values, a.requires_grad or b.requires_grad)

    def vjp(g):
        ga = _unbroadcast(g / b.values, a.values.shape)
        gb = _unbroadcast(-g * a.values / (b.values * b.values), b.values.shape)
        return ga, gb

    return _record(out, (a, b), vjp)


def neg(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(-a.values, a.requires_grad)
    return _record(out, (a,), lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-D tensors."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise ValueError("matmul expects 2-D operands")
    if a.values.shape[1] != b.values.shape[0]:
        raise ValueError(
            f"matmul dimension mismatch: {a.values.shape} @ {b.values.shape}"
        )
    out = Tensor(a.values @ b.values, a.requires_grad or b.requires_grad)

    def vjp(g):
        return g @ b.values.T, a.values.T @ g

    return _record(out, (a, b), vjp)


def relu(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.maximum(a.values, 0.0), a.requires_grad)
    mask = a.values > 0.0

    def vjp(g):
        return (g * mask,)

    return _record(out, (a,), vjp)


def sin(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.sin(a.values), a.requires_grad)

    def vjp(g):
        return (g * np.cos(a.values),)

    return _record(out, (a,), vjp)


def exp(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(np.exp(a.values), a.requires_grad)

    def vjp(g):
        return (g * out.values,)

    return _record(out, (a,), vjp)


def power(a: Tensor, p: float) -> Tensor:
    a = _as_tensor(a)
    p = float(p)
    out = Tensor(a.values**p, a.requires_grad)

    def vjp(g):
        return (g * p * a.values ** (p - 1.0),)

    return _record(out, (a,), vjp)


def absolute(a: Tensor) -> Tensor:
    # subgradient 0 at the kink
    a = _as_tensor(a)
    out = Tensor(np.abs(a.values), a.requires_grad)

    def vjp(g):
        return (g * np.sign(a.values),)

    return _record(out, (a,), vjp)


def tensor_sum(a: Tensor, axis=None) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.values.sum(axis=axis), a.requires_grad)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.values.shape).copy(),)
        gg = np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.values.shape).copy(),)

    return _record(out, (a,), vjp)


def mean(a: Tensor, axis=None) -> Tensor:
    a = _as_tensor(a)
    n = a.values.size if axis is None else a.values.shape[axis]
    return mul(tensor_sum(a, axis=axis), 1.0 / float(n))


def amax(a: Tensor, axis: int) -> Tensor:
    """Maximum along an axis; the cotangent routes to the first argmax."""
    a = _as_tensor(a)
    out = Tensor(a.values.max(axis=axis), a.requires_grad)
    idx = a.values.argmax(axis=axis)

    def vjp(g):
        grad = np.zeros_like(a.values)
        np.put_along_axis(
            grad, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis
        )
        return (grad,)

    return _record(out, (a,), vjp)


def clip_max(a: Tensor, cap: float) -> Tensor:
    """Elementwise min(a, cap); pass-through derivative where a <= cap."""
    a = _as_tensor(a)
    out = Tensor(np.minimum(a.values, cap), a.requires_grad)
    mask = a.values <= cap

    def vjp(g):
        return (g * mask,)

    return _record(out, (a,), vjp)


def reshape(a: Tensor, shape) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(a.values.reshape(shape), a.requires_grad)

    def vjp(g):
        return (g.reshape(a.values.shape),)

    return _record(out, (a,), vjp)


def take_cols(a: Tensor, idx) -> Tensor:
    """Select columns of a 2-D tensor; the backward scatter-adds them back."""
    a = _as_tensor(a)
    if a.values.ndim != 2:
        raise ValueError("take_cols expects a 2-D tensor")
    idx = np.asarray(idx, dtype=np.intp)
    out = Tensor(a.values[:, idx], a.requires_grad)

    def vjp(g):
        grad = np.zeros_like(a.values)
        np.add.at(grad, (slice(None), idx), g)
        return (grad,)

    return _record(out, (a,), vjp)


def register_custom_vjp(forward_fn, vjp_fn):
    """Wrap a black-box computation as a differentiable op.

    :param forward_fn: maps input arrays to ``(output_array, residuals)``;
        residuals carry whatever the backward rule needs.
    :param vjp_fn: maps ``(residuals, cotangent)`` to a tuple of input
        cotangents (``None`` entries are allowed).
    :returns: a callable taking and returning ``Tensor`` objects.
    """

    def op(*inputs):
        tensors = tuple(_as_tensor(t) for t in inputs)
        out_values, residuals = forward_fn(*(t.values for t in tensors))
        out = Tensor(out_values, any(t.requires_grad for t in tensors))

        def vjp(g):
            return vjp_fn(residuals, g)

        return _record(out, tensors, vjp)

    return op


class PseudoInverse:
    """Moore-Penrose pseudo-inverse held in thin-SVD factors.

    Singular values below ``rank_tol`` times the largest are dropped, so a
    zero matrix yields the zero pseudo-inverse.
    """

    def __init__(self, a: np.ndarray, rank_tol: float = 1e-12):
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2:
            raise ValueError("pinv expects a 2-D matrix")
        self.shape = a.shape
        if a.size == 0:
            self.rank = 0
            self._u = np.zeros((a.shape[0], 0))
            self._s = np.zeros(0)
            self._vt = np.zeros((0, a.shape[1]))
            return
        u, s, vt = np.linalg.svd(a, full_matrices=False)
        if s.size and s[0] > 0.0:
            keep = s > rank_tol * s[0]
        else:
            keep = np.zeros_like(s, dtype=bool)
        self.rank = int(keep.sum())
        self._u = np.ascontiguousarray(u[:, keep])
        self._s = s[keep]
        self._vt = np.ascontiguousarray(vt[keep])

    def apply(self, w: np.ndarray) -> np.ndarray:
        """A^+ w for a single m-vector."""
        if self.rank == 0:
            return np.zeros(self.shape[1])
        return self._vt.T @ ((self._u.T @ w) / self._s)

    def apply_rows(self, w: np.ndarray) -> np.ndarray:
        """Rows of W mapped through A^+ (i.e. W @ (A^+)^T) for W of shape (B, m)."""
        if self.rank == 0:
            return np.zeros((w.shape[0], self.shape[1]))
        return ((w @ self._u) / self._s) @ self._vt

    def dense(self) -> np.ndarray:
        if self.rank == 0:
            return np.zeros((self.shape[1], self.shape[0]))
        return self._vt.T @ np.diag(1.0 / self._s) @ self._u.T


def pinv(a: np.ndarray, rank_tol: float = 1e-12) -> PseudoInverse:
    """SVD-based pseudo-inverse; see :class:`PseudoInverse`."""
    return PseudoInverse(a, rank_tol=rank_tol)
