"""Minimal reverse-mode differentiation engine over float64 numpy arrays.

The op set is exactly what the point classifier and its losses need:
elementwise add/mul (broadcasting), 2-D matmul/transpose, reshape, relu,
clamped log, exp, mean/sum reductions, max-over-axis with argmax routing,
concat, row gathering, row L2-normalization, and row softmax. Graphs are
built eagerly; `backward` walks the tape once and accumulates exact
analytic gradients into every reachable Value that requires them.

Training runs in float64 throughout; checkpoints quantize to float32 at
the serialization boundary (see model.py).
"""
from __future__ import annotations

import numpy as np

# Floor for log arguments; keeps log(1 - p) finite when p reaches 1.
LOG_FLOOR = 1e-12


class GraphError(ValueError):
    """Incompatible shapes or a malformed graph operation."""


class Value:
    """One node of the computation graph.

    `data` is always a float64 ndarray. `grad` is allocated for
    parameters at construction and for intermediates on first backward.
    `_backward` maps the node's output gradient to per-parent gradients.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf",
                 parents: tuple = (), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if requires_grad and not parents else None
        self.op = op
        self._parents = parents
        self._backward = backward

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Value(op={self.op!r}, shape={self.data.shape})"

    # Operator sugar; everything routes through the module-level ops.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data) -> Value:
    """Leaf Value that accumulates gradients (a trainable weight)."""
    return Value(np.array(data, dtype=np.float64), requires_grad=True, op="param")


def constant(data) -> Value:
    return Value(data, requires_grad=False, op="const")


def _coerce(x) -> Value:
    return x if isinstance(x, Value) else constant(x)


def _node(data, op: str, parents: tuple, backward) -> Value:
    requires = any(p.requires_grad for p in parents)
    return Value(data, requires_grad=requires, op=op,
                 parents=parents if requires else (),
                 backward=backward if requires else None)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# ops


def add(a, b) -> Value:
    a, b = _coerce(a), _coerce(b)
    try:
        out = a.data + b.data
    except ValueError:
        raise GraphError(f"add: shapes {a.shape} and {b.shape} do not broadcast") from None

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _node(out, "add", (a, b), bwd)


def mul(a, b) -> Value:
    a, b = _coerce(a), _coerce(b)
    try:
        out = a.data * b.data
    except ValueError:
        raise GraphError(f"mul: shapes {a.shape} and {b.shape} do not broadcast") from None

    def bwd(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _node(out, "mul", (a, b), bwd)


def matmul(a, b) -> Value:
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise GraphError(f"matmul: shapes {a.shape} x {b.shape}")
    out = a.data @ b.data

    def bwd(g):
        return g @ b.data.T, a.data.T @ g

    return _node(out, "matmul", (a, b), bwd)


def transpose(a) -> Value:
    a = _coerce(a)
    if a.data.ndim != 2:
        raise GraphError(f"transpose: expected 2-D, got {a.shape}")

    def bwd(g):
        return (g.T,)

    return _node(a.data.T, "transpose", (a,), bwd)


def reshape(a, shape) -> Value:
    a = _coerce(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise GraphError(f"reshape: {a.shape} -> {shape}") from None

    def bwd(g):
        return (g.reshape(a.data.shape),)

    return _node(out, "reshape", (a,), bwd)


def relu(a) -> Value:
    a = _coerce(a)
    mask = a.data > 0.0

    def bwd(g):
        return (g * mask,)

    return _node(np.where(mask, a.data, 0.0), "relu", (a,), bwd)


def log(a) -> Value:
    """Natural log with the input clamped to >= LOG_FLOOR.

    Below the floor the clamped function is constant, so the gradient
    there is zero rather than 1/x exploding.
    """
    a = _coerce(a)
    clamped = np.maximum(a.data, LOG_FLOOR)

    def bwd(g):
        return (np.where(a.data >= LOG_FLOOR, g / clamped, 0.0),)

    return _node(np.log(clamped), "log", (a,), bwd)


def exp(a) -> Value:
    a = _coerce(a)
    out = np.exp(a.data)

    def bwd(g):
        return (g * out,)

    return _node(out, "exp", (a,), bwd)


def mean(a) -> Value:
    a = _coerce(a)
    n = a.data.size
    if n == 0:
        raise GraphError("mean: empty input")

    def bwd(g):
        return (np.full(a.data.shape, float(g) / n),)

    return _node(a.data.mean(), "mean", (a,), bwd)


def sum(a, axis: int | None = None) -> Value:  # noqa: A001 - mirrors np.sum
    a = _coerce(a)
    out = a.data.sum(axis=axis)

    def bwd(g):
        if axis is None:
            return (np.full(a.data.shape, float(g)),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy(),)

    return _node(out, "sum", (a,), bwd)


def max_over_axis(a, axis: int) -> Value:
    """Max along one axis; gradient routes to the first (lowest-index) argmax."""
    a = _coerce(a)
    if a.data.ndim == 0:
        raise GraphError("max_over_axis: scalar input")
    idx = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def bwd(g):
        gx = np.zeros_like(a.data)
        np.put_along_axis(gx, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        return (gx,)

    return _node(out, "max_over_axis", (a,), bwd)


def concat(values, axis: int = 0) -> Value:
    vals = [_coerce(v) for v in values]
    if not vals:
        raise GraphError("concat: empty input list")
    try:
        out = np.concatenate([v.data for v in vals], axis=axis)
    except ValueError:
        raise GraphError(f"concat: shapes {[v.shape for v in vals]}") from None
    sizes = [v.data.shape[axis] for v in vals]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(out, "concat", tuple(vals), bwd)


def gather_rows(a, indices) -> Value:
    a = _coerce(a)
    idx = np.asarray(indices, dtype=np.int64)
    if a.data.ndim < 1:
        raise GraphError("gather_rows: scalar input")
    out = a.data[idx]

    def bwd(g):
        gx = np.zeros_like(a.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _node(out, "gather_rows", (a,), bwd)


def l2_normalize_rows(a) -> Value:
    """Normalize each row to unit L2 norm; zero rows pass through with zero grad."""
    a = _coerce(a)
    if a.data.ndim != 2:
        raise GraphError(f"l2_normalize_rows: expected 2-D, got {a.shape}")
    norms = np.linalg.norm(a.data, axis=1, keepdims=True)
    safe = np.where(norms > 0.0, norms, 1.0)
    y = a.data / safe

    def bwd(g):
        dot = np.einsum("ij,ij->i", g, y)[:, None]
        gx = (g - y * dot) / safe
        return (np.where(norms > 0.0, gx, 0.0),)

    return _node(y, "l2_normalize_rows", (a,), bwd)


def softmax_rows(a) -> Value:
    a = _coerce(a)
    if a.data.ndim != 2:
        raise GraphError(f"softmax_rows: expected 2-D, got {a.shape}")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def bwd(g):
        dot = np.einsum("ij,ij->i", g, y)[:, None]
        return (y * (g - dot),)

    return _node(y, "softmax_rows", (a,), bwd)


# ---------------------------------------------------------------------------
# backward pass and optimizer


def backward(root: Value) -> None:
    """Accumulate d(root)/d(value) into every reachable requires-grad Value.

    Repeated calls without zeroing add their contributions. The pass uses
    a per-call gradient table and flushes into `.grad` at the end, so the
    accumulate semantics hold for intermediates as well as leaves.
    """
    if root.data.size != 1:
        raise GraphError(f"backward: root must be scalar, got shape {root.shape}")
    if not root.requires_grad:
        return

    topo: list[Value] = []
    visited: set[int] = set()
    stack: list[tuple[Value, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is not None:
            for parent, pg in zip(node._parents, node._backward(g)):
                if not parent.requires_grad:
                    continue
                key = id(parent)
                held = grads.get(key)
                grads[key] = pg if held is None else held + pg
        node.grad = g.copy() if node.grad is None else node.grad + g


class SGD:
    """Plain SGD with classical momentum: v <- m*v + g ; w <- w - lr*v."""

    def __init__(self, params: list[Value], lr: float, momentum: float = 0.0):
        if lr <= 0.0:
            raise ValueError(f"lr must be positive, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {momentum}")
        self.params = list(params)
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        for p, v in zip(self.params, self.velocity):
            g = p.grad if p.grad is not None else 0.0
            v *= self.momentum
            v += g
            p.data -= self.lr * v

    def zero_grads(self) -> None:
        for p in self.params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
            else:
                p.grad.fill(0.0)
