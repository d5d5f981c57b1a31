"""Reverse-mode automatic differentiation over dense double-precision arrays.

The graph is an implicit tape: every tensor produced by an operation stores
its parent tensors and a VJP closure, plus a monotonically increasing node
id.  Creation order therefore *is* topological order, and the backward pass
visits reachable nodes in decreasing id order exactly once, so gradient
accumulation is deterministic (bit-identical across runs of the same graph).

Only trailing-dimension broadcasting is supported for binary ops.  Any
non-finite value appearing in a forward result raises immediately, naming
the offending op; silent NaN/Inf propagation is never allowed.
"""

from __future__ import annotations

import itertools

import numpy as np

__all__ = [
    "AutodiffError",
    "Tensor",
    "Gradients",
    "as_tensor",
    "elementwise",
    "matmul",
    "reduce",
    "backward",
    "stop_gradient",
    "no_grad",
]

_ids = itertools.count()

# While False, newly created ops do not record parents or VJPs.
_grad_enabled = True


class AutodiffError(RuntimeError):
    """Graph misuse or a non-finite forward result."""


class no_grad:
    """Context manager disabling graph recording (evaluation-only paths)."""

    def __enter__(self):
        global _grad_enabled
        self._saved = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._saved
        return False


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise AutodiffError(f"non-finite values produced by op '{op}'")


class Tensor:
    """Immutable dense array participating in the differentiation graph."""

    __slots__ = ("data", "requires_grad", "node_id", "_parents", "_vjp", "_op")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        arr.setflags(write=False)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_ids)
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None
        self._op = "leaf"

    @classmethod
    def _from_op(cls, data: np.ndarray, op: str, parents, vjp) -> "Tensor":
        _check_finite(data, op)
        out = cls.__new__(cls)
        data = np.asarray(data, dtype=np.float64)
        data.setflags(write=False)
        out.data = data
        out.node_id = next(_ids)
        out._op = op
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._vjp = vjp
        else:
            out.requires_grad = False
            out._parents = ()
            out._vjp = None
        return out

    # -- introspection -------------------------------------------------
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

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op!r}, requires_grad={self.requires_grad})"

    # -- operator sugar --------------------------------------------------
    def __add__(self, other):
        return elementwise("add", self, other)

    def __radd__(self, other):
        return elementwise("add", other, self)

    def __sub__(self, other):
        return elementwise("sub", self, other)

    def __rsub__(self, other):
        return elementwise("sub", other, self)

    def __mul__(self, other):
        return elementwise("mul", self, other)

    def __rmul__(self, other):
        return elementwise("mul", other, self)

    def __truediv__(self, other):
        return elementwise("div", self, other)

    def __rtruediv__(self, other):
        return elementwise("div", other, self)

    def __neg__(self):
        return elementwise("neg", self)

    def __matmul__(self, other):
        return matmul(self, other)

    def tanh(self):
        return elementwise("tanh", self)

    def sigmoid(self):
        return elementwise("sigmoid", self)

    def softplus(self):
        return elementwise("softplus", self)

    def exp(self):
        return elementwise("exp", self)

    def log(self):
        return elementwise("log", self)

    def sum(self, axis=None):
        return reduce("sum", self, axis)

    def mean(self, axis=None):
        return reduce("mean", self, axis)

    def logsumexp(self, axis=None):
        return reduce("logsumexp", self, axis)

    def reshape(self, shape):
        return _reshape(self, shape)

    def detach(self) -> "Tensor":
        return stop_gradient(self)


def as_tensor(value) -> Tensor:
    """Wrap scalars / arrays as constant tensors; pass tensors through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


class Gradients:
    """Map from leaf node id to a gradient tensor of matching shape."""

    def __init__(self, by_id: dict[int, Tensor]):
        self._by_id = by_id

    def of(self, param: Tensor) -> Tensor:
        try:
            return self._by_id[param.node_id]
        except KeyError:
            raise AutodiffError("no gradient recorded for this tensor") from None

    def __contains__(self, param) -> bool:
        key = param.node_id if isinstance(param, Tensor) else param
        return key in self._by_id

    def __len__(self) -> int:
        return len(self._by_id)

    def ids(self):
        return self._by_id.keys()


# -- elementwise ops --------------------------------------------------------

_UNARY = {"tanh", "sigmoid", "softplus", "exp", "log", "neg"}
_BINARY = {"add", "sub", "mul", "div"}


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing trailing-dimension broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _stable_softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def elementwise(op_kind: str, a, b=None) -> Tensor:
    """Pointwise op with trailing-dimension broadcasting for binary kinds."""
    a = as_tensor(a)
    if op_kind in _UNARY:
        if b is not None:
            raise AutodiffError(f"op '{op_kind}' is unary")
        x = a.data
        if op_kind == "neg":
            out, vjp = -x, lambda g: (-g,)
        elif op_kind == "tanh":
            y = np.tanh(x)
            out, vjp = y, lambda g: (g * (1.0 - y * y),)
        elif op_kind == "sigmoid":
            y = _stable_sigmoid(x)
            out, vjp = y, lambda g: (g * y * (1.0 - y),)
        elif op_kind == "softplus":
            out = _stable_softplus(x)
            vjp = lambda g: (g * _stable_sigmoid(x),)
        elif op_kind == "exp":
            y = np.exp(x)
            out, vjp = y, lambda g: (g * y,)
        else:  # log
            if np.any(x <= 0.0):
                raise AutodiffError("log of non-positive value")
            out, vjp = np.log(x), lambda g: (g / x,)
        return Tensor._from_op(out, op_kind, (a,), vjp)

    if op_kind not in _BINARY:
        raise AutodiffError(f"unknown elementwise op '{op_kind}'")
    if b is None:
        raise AutodiffError(f"op '{op_kind}' is binary")
    b = as_tensor(b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise AutodiffError(
            f"shapes {a.shape} and {b.shape} are not broadcastable"
        ) from None
    xa, xb = a.data, b.data
    if op_kind == "add":
        out = xa + xb
        vjp = lambda g: (_unbroadcast(g, xa.shape), _unbroadcast(g, xb.shape))
    elif op_kind == "sub":
        out = xa - xb
        vjp = lambda g: (_unbroadcast(g, xa.shape), _unbroadcast(-g, xb.shape))
    elif op_kind == "mul":
        out = xa * xb
        vjp = lambda g: (
            _unbroadcast(g * xb, xa.shape),
            _unbroadcast(g * xa, xb.shape),
        )
    else:  # div
        if np.any(xb == 0.0):
            raise AutodiffError("division by zero")
        out = xa / xb
        vjp = lambda g: (
            _unbroadcast(g / xb, xa.shape),
            _unbroadcast(-g * xa / (xb * xb), xb.shape),
        )
    return Tensor._from_op(out, op_kind, (a, b), vjp)


def matmul(a, b) -> Tensor:
    """2-D matrix product with dA = dC @ B^T and dB = A^T @ dC."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise AutodiffError("matmul expects 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise AutodiffError(f"matmul inner dims disagree: {a.shape} @ {b.shape}")
    xa, xb = a.data, b.data
    out = xa @ xb
    vjp = lambda g: (g @ xb.T, xa.T @ g)
    return Tensor._from_op(out, "matmul", (a, b), vjp)


def reduce(op_kind: str, a, axis=None) -> Tensor:
    """sum / mean / logsumexp over an axis (or everything when axis is None)."""
    a = as_tensor(a)
    x = a.data
    if axis is not None:
        axis = int(axis)
        if not -x.ndim <= axis < x.ndim:
            raise AutodiffError(f"axis {axis} invalid for shape {x.shape}")
        if x.shape[axis] == 0:
            raise AutodiffError("reduction over empty axis")
    elif x.size == 0:
        raise AutodiffError("reduction over empty tensor")

    if op_kind == "sum":
        out = x.sum(axis=axis)

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, x.shape).copy(),)
            return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    elif op_kind == "mean":
        n = x.size if axis is None else x.shape[axis]
        out = x.mean(axis=axis)

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g / n, x.shape).copy(),)
            return (np.broadcast_to(np.expand_dims(g, axis) / n, x.shape).copy(),)

    elif op_kind == "logsumexp":
        # m + log sum exp(x - m) with m = max(x): shift-invariant and
        # overflow-free even for entries around +-1000.
        m = x.max(axis=axis, keepdims=True)
        out = np.squeeze(m, axis=axis) if axis is not None else m.reshape(())
        out = out + np.log(np.sum(np.exp(x - m), axis=axis))

        def vjp(g):
            lse = out if axis is None else np.expand_dims(out, axis)
            soft = np.exp(x - lse)
            if axis is None:
                return (g * soft,)
            return (np.expand_dims(g, axis) * soft,)

    else:
        raise AutodiffError(f"unknown reduce op '{op_kind}'")
    return Tensor._from_op(out, op_kind, (a,), vjp)


def _reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(int(s) for s in (shape if hasattr(shape, "__len__") else (shape,)))
    x = a.data
    out = x.reshape(shape)
    vjp = lambda g: (g.reshape(x.shape),)
    return Tensor._from_op(out, "reshape", (a,), vjp)


def stop_gradient(a) -> Tensor:
    """Same values, but contributes zero gradient to its inputs."""
    a = as_tensor(a)
    return Tensor(a.data)


def backward(loss: Tensor) -> Gradients:
    """Backpropagate from a scalar loss to every requires-grad leaf.

    Seeds d(loss)/d(loss) = 1 and accumulates by addition at fan-in, walking
    nodes in reverse creation order.
    """
    if not isinstance(loss, Tensor):
        raise AutodiffError("backward expects a Tensor loss")
    if loss.size != 1:
        raise AutodiffError(f"loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise AutodiffError("loss is detached from the graph")

    # Reachable requires-grad subgraph, then reverse creation order.
    seen: dict[int, Tensor] = {}
    stack = [loss]
    while stack:
        node = stack.pop()
        if node.node_id in seen:
            continue
        seen[node.node_id] = node
        for p in node._parents:
            if p.requires_grad:
                stack.append(p)
    order = sorted(seen.values(), key=lambda t: t.node_id, reverse=True)

    grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for node in order:
        g = grads.pop(node.node_id, None)
        if g is None:
            continue
        if node._vjp is None:
            if not node._parents:
                leaves[node.node_id] = Tensor(g)
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if not parent.requires_grad:
                continue
            acc = grads.get(parent.node_id)
            grads[parent.node_id] = pg if acc is None else acc + pg
    return Gradients(leaves)
