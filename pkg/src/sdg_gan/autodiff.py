"""Reverse-mode automatic differentiation over 2-D float64 arrays.

A :class:`Graph` is an append-only tape of nodes.  Every node stores the
operation that produced it, the indices of its parents and its cached
value.  Backward rules are written with the same differentiable operations
used in the forward pass, so when ``create_graph=True`` the gradients are
themselves graph nodes and can be differentiated again (needed for gradient
penalties).  With ``create_graph=False`` the rules run with recording
suspended and produce plain, unrecorded tensors.

Example
-------
>>> g = Graph()
>>> x = g.leaf([[1.0, 2.0, 3.0]])
>>> loss = mean(square(x))
>>> grads = g.backward(loss)
>>> grads[x.index].value
array([[0.66666667, 1.33333333, 2.        ]])
"""

from __future__ import annotations

import warnings
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

SQRT_GUARD = 1e-12


class ShapeError(ValueError):
    """Operand shapes do not conform to an operation's shape rule."""


class DomainError(ValueError):
    """An operation was applied outside its mathematical domain."""


class NotAncestorWarning(UserWarning):
    """Requested gradient w.r.t. a node that does not influence the root."""


@dataclass
class Node:
    op: str
    parents: tuple[int, ...]
    value: np.ndarray
    attr: object = None
    requires_grad: bool = False


class Tensor:
    """Handle to a graph node, or a free-standing value when ``index`` is None."""

    __slots__ = ("graph", "index", "value", "requires_grad")
    __array_priority__ = 100

    def __init__(self, graph: "Graph", index: int | None, value: np.ndarray, requires_grad: bool = False):
        self.graph = graph
        self.index = index
        self.value = value
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        if self.value.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.value[0, 0])

    def _lift(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return self.graph.constant(np.full((1, 1), float(other)))

    def __add__(self, other):
        if isinstance(other, (int, float)):
            return shift(self, other)
        return add(self, self._lift(other))

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return shift(self, -other)
        return sub(self, self._lift(other))

    def __rsub__(self, other):
        return shift(scale(self, -1.0), other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, self._lift(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / other)
        return div(self, self._lift(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:
        where = "free" if self.index is None else f"node {self.index}"
        return f"Tensor({where}, shape={self.shape})"


def _as_2d(value) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"tensors are 2-D, got an array with shape {arr.shape}")
    return arr


class Graph:
    """Append-only computation tape.  Single owner; not safe to share while mutating."""

    def __init__(self):
        self.nodes: list[Node] = []
        self._paused = 0

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def recording(self) -> bool:
        return self._paused == 0

    @contextmanager
    def no_record(self):
        """Evaluate operations without appending nodes (values only)."""
        self._paused += 1
        try:
            yield self
        finally:
            self._paused -= 1

    def _append(self, op, parents, value, attr, requires_grad) -> Tensor:
        self.nodes.append(Node(op, parents, value, attr, requires_grad))
        return Tensor(self, len(self.nodes) - 1, value, requires_grad)

    def leaf(self, value, requires_grad: bool = True) -> Tensor:
        """Register an input array (parameters, data) as a leaf node."""
        value = _as_2d(value)
        if not self.recording:
            return Tensor(self, None, value, False)
        return self._append("leaf", (), value, None, requires_grad)

    def constant(self, value) -> Tensor:
        return self.leaf(value, requires_grad=False)

    def tensor(self, index: int) -> Tensor:
        node = self.nodes[index]
        return Tensor(self, index, node.value, node.requires_grad)

    def eval(self, op: str, parents: Sequence[Tensor], attr=None) -> Tensor:
        """Apply ``op`` to ``parents`` and, when recording, append the result."""
        rule = OPS.get(op)
        if rule is None:
            raise KeyError(f"unknown op-kind {op!r}")
        for p in parents:
            if p.graph is not self:
                raise ValueError(f"{op}: operand belongs to a different graph")
        value = rule.forward(*(p.value for p in parents), attr=attr)
        if not self.recording:
            return Tensor(self, None, value, False)
        # free tensors entering a recorded op become constants
        parents = [p if p.index is not None else self.constant(p.value) for p in parents]
        requires_grad = any(p.requires_grad for p in parents)
        return self._append(op, tuple(p.index for p in parents), value, attr, requires_grad)

    # ------------------------------------------------------------------
    def ancestors(self, root: int) -> set[int]:
        seen = {root}
        stack = [root]
        while stack:
            for p in self.nodes[stack.pop()].parents:
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        return seen

    def backward(self, root: Tensor, create_graph: bool = False, wrt: Iterable[Tensor] | None = None) -> dict[int, Tensor]:
        """Gradients of a scalar ``root`` w.r.t. every ancestor that requires grad.

        Returns a dict keyed by node index.  With ``create_graph=True`` the
        gradient tensors are recorded nodes of this graph.  ``wrt`` restricts
        the sweep to nodes lying between those tensors and the root.
        """
        if root.index is None or root.graph is not self:
            raise ValueError("backward root must be a recorded node of this graph")
        if root.shape != (1, 1):
            raise ShapeError(f"backward: root must be scalar (1x1), got {root.shape}")
        live = {i for i in self.ancestors(root.index) if self.nodes[i].requires_grad}
        if wrt is not None:
            live &= self._descendants({t.index for t in wrt}, root.index)
        grads: dict[int, Tensor] = {}
        if root.index not in live:
            return grads
        ctx = _nullcontext() if create_graph else self.no_record()
        with ctx:
            grads[root.index] = self.constant(np.ones((1, 1)))
            for i in sorted(live, reverse=True):
                g = grads.get(i)
                node = self.nodes[i]
                if g is None or node.op == "leaf":
                    continue
                parents = [self.tensor(p) for p in node.parents]
                out = self.tensor(i)
                pgrads = OPS[node.op].backward(g, parents, out, node.attr)
                for p, pg in zip(node.parents, pgrads):
                    if pg is None or p not in live:
                        continue
                    grads[p] = pg if p not in grads else add(grads[p], pg)
        return grads

    def _descendants(self, sources: set[int], upto: int) -> set[int]:
        out = set(sources)
        for i in range(min(sources, default=upto + 1), upto + 1):
            if i not in out and any(p in out for p in self.nodes[i].parents):
                out.add(i)
        return out

    def input_gradient(self, root: Tensor, x: Tensor) -> Tensor:
        """d root / d x as recorded nodes, so it can be differentiated again."""
        if x.index is None or self.nodes[x.index].op != "leaf":
            raise ValueError("input_gradient: x must be a recorded leaf")
        grads = self.backward(root, create_graph=True, wrt=[x])
        if x.index not in grads:
            warnings.warn(
                f"node {x.index} is not a differentiable ancestor of node {root.index}; returning zeros",
                NotAncestorWarning,
                stacklevel=2,
            )
            return self.constant(np.zeros(x.shape))
        return grads[x.index]

    def replay(self, leaf_values: dict[int, np.ndarray] | None = None) -> list[np.ndarray]:
        """Re-run every node from its leaves; ``leaf_values`` overrides leaf values."""
        leaf_values = leaf_values or {}
        values: list[np.ndarray] = []
        for i, node in enumerate(self.nodes):
            if node.op == "leaf":
                values.append(leaf_values.get(i, node.value))
            else:
                values.append(OPS[node.op].forward(*(values[p] for p in node.parents), attr=node.attr))
        return values


@contextmanager
def _nullcontext():
    yield


# ----------------------------------------------------------------------
# op table


@dataclass(frozen=True)
class OpRule:
    forward: Callable[..., np.ndarray]
    backward: Callable[[Tensor, list[Tensor], Tensor, object], list[Tensor | None]]


OPS: dict[str, OpRule] = {}


def _register(name, forward, backward):
    OPS[name] = OpRule(forward, backward)


def _broadcast_shape(op, a, b):
    shape = []
    for da, db in zip(a, b):
        if da == db or db == 1:
            shape.append(da)
        elif da == 1:
            shape.append(db)
        else:
            raise ShapeError(f"{op}: shapes {a} and {b} do not broadcast")
    return tuple(shape)


def _binary_forward(op, fn):
    def forward(a, b, attr=None):
        _broadcast_shape(op, a.shape, b.shape)
        return fn(a, b)

    return forward


def _matmul_fwd(a, b, attr=None):
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    return a @ b


def _add_row_fwd(a, b, attr=None):
    if b.shape != (1, a.shape[1]):
        raise ShapeError(f"add_row: expected a row of shape (1, {a.shape[1]}), got shapes {a.shape} and {b.shape}")
    return a + b


def _sqrt_fwd(a, attr=None):
    if np.any(a < 0):
        raise DomainError(f"sqrt: negative input (min {a.min():.6g})")
    return np.sqrt(a)


def _log_fwd(a, attr=None):
    if np.any(a <= 0):
        raise DomainError(f"log: non-positive input (min {a.min():.6g})")
    return np.log(a)


def _sigmoid(a):
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _softplus(a):
    return np.maximum(a, 0.0) + np.log1p(np.exp(-np.abs(a)))


def _sum_to_fwd(a, attr):
    rows, cols = attr
    if rows == 1 and a.shape[0] != 1:
        a = a.sum(axis=0, keepdims=True)
    if cols == 1 and a.shape[1] != 1:
        a = a.sum(axis=1, keepdims=True)
    if a.shape != (rows, cols):
        raise ShapeError(f"sum_to: cannot reduce shape {a.shape} to {attr}")
    return a


def _broadcast_fwd(a, attr):
    _broadcast_shape("broadcast_to", a.shape, attr)
    if a.shape not in ((1, 1), (1, attr[1]), (attr[0], 1), tuple(attr)):
        raise ShapeError(f"broadcast_to: cannot broadcast {a.shape} to {attr}")
    return np.broadcast_to(a, attr).copy()


def _reduce(g: Tensor, shape) -> Tensor:
    return g if g.shape == tuple(shape) else sum_to(g, shape)


_register("matmul", _matmul_fwd, lambda g, p, out, attr: [matmul(g, transpose(p[1])), matmul(transpose(p[0]), g)])
_register("transpose", lambda a, attr=None: a.T.copy(), lambda g, p, out, attr: [transpose(g)])
_register("add_row", _add_row_fwd, lambda g, p, out, attr: [g, sum_to(g, p[1].shape)])
_register(
    "add",
    _binary_forward("add", np.add),
    lambda g, p, out, attr: [_reduce(g, p[0].shape), _reduce(g, p[1].shape)],
)
_register(
    "sub",
    _binary_forward("sub", np.subtract),
    lambda g, p, out, attr: [_reduce(g, p[0].shape), _reduce(scale(g, -1.0), p[1].shape)],
)
_register(
    "mul",
    _binary_forward("mul", np.multiply),
    lambda g, p, out, attr: [_reduce(mul(g, p[1]), p[0].shape), _reduce(mul(g, p[0]), p[1].shape)],
)
_register(
    "div",
    _binary_forward("div", np.divide),
    lambda g, p, out, attr: [
        _reduce(div(g, p[1]), p[0].shape),
        _reduce(scale(div(mul(g, out), p[1]), -1.0), p[1].shape),
    ],
)
_register("scale", lambda a, attr: a * attr, lambda g, p, out, attr: [scale(g, attr)])
_register("shift", lambda a, attr: a + attr, lambda g, p, out, attr: [g])
_register("square", lambda a, attr=None: a * a, lambda g, p, out, attr: [mul(g, scale(p[0], 2.0))])
_register("sqrt", _sqrt_fwd, lambda g, p, out, attr: [div(g, scale(out, 2.0))])
_register("exp", lambda a, attr=None: np.exp(a), lambda g, p, out, attr: [mul(g, out)])
_register("log", _log_fwd, lambda g, p, out, attr: [div(g, p[0])])
_register(
    "mean",
    lambda a, attr=None: np.full((1, 1), a.mean()),
    lambda g, p, out, attr: [broadcast_to(scale(g, 1.0 / p[0].value.size), p[0].shape)],
)
_register("sum_to", _sum_to_fwd, lambda g, p, out, attr: [broadcast_to(g, p[0].shape)])
_register("broadcast_to", _broadcast_fwd, lambda g, p, out, attr: [sum_to(g, p[0].shape)])
# slope(x; a) is the derivative of leaky-relu; piecewise constant so its own gradient is zero
_register("slope", lambda a, attr: np.where(a > 0, 1.0, attr), lambda g, p, out, attr: [None])
_register("relu", lambda a, attr=None: np.maximum(a, 0.0), lambda g, p, out, attr: [mul(g, _slope(p[0], 0.0))])
_register(
    "leaky_relu",
    lambda a, attr: np.where(a > 0, a, attr * a),
    lambda g, p, out, attr: [mul(g, _slope(p[0], attr))],
)
_register(
    "sigmoid",
    lambda a, attr=None: _sigmoid(a),
    lambda g, p, out, attr: [mul(g, mul(out, shift(scale(out, -1.0), 1.0)))],
)
_register(
    "tanh",
    lambda a, attr=None: np.tanh(a),
    lambda g, p, out, attr: [mul(g, shift(scale(square(out), -1.0), 1.0))],
)
_register("softplus", lambda a, attr=None: _softplus(a), lambda g, p, out, attr: [mul(g, sigmoid(p[0]))])


def _l2_rows_bwd(g, p, out, attr):
    x = p[0]
    guarded = sqrt(shift(sum_to(square(x), (x.shape[0], 1)), SQRT_GUARD))
    return [mul(x, div(g, guarded))]


_register("l2_norm_rows", lambda a, attr=None: np.sqrt(np.sum(a * a, axis=1, keepdims=True)), _l2_rows_bwd)


# ----------------------------------------------------------------------
# public differentiable operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return a.graph.eval("matmul", (a, b))


def transpose(a: Tensor) -> Tensor:
    return a.graph.eval("transpose", (a,))


def add_row(a: Tensor, row: Tensor) -> Tensor:
    """``a + row`` with a (1, cols) row broadcast over every row of ``a``."""
    return a.graph.eval("add_row", (a, row))


def add(a: Tensor, b: Tensor) -> Tensor:
    return a.graph.eval("add", (a, b))


def sub(a: Tensor, b: Tensor) -> Tensor:
    return a.graph.eval("sub", (a, b))


def mul(a: Tensor, b: Tensor) -> Tensor:
    return a.graph.eval("mul", (a, b))


def div(a: Tensor, b: Tensor) -> Tensor:
    return a.graph.eval("div", (a, b))


def scale(a: Tensor, c: float) -> Tensor:
    return a.graph.eval("scale", (a,), float(c))


def shift(a: Tensor, c: float) -> Tensor:
    return a.graph.eval("shift", (a,), float(c))


def square(a: Tensor) -> Tensor:
    return a.graph.eval("square", (a,))


def sqrt(a: Tensor) -> Tensor:
    return a.graph.eval("sqrt", (a,))


def exp(a: Tensor) -> Tensor:
    return a.graph.eval("exp", (a,))


def log(a: Tensor) -> Tensor:
    return a.graph.eval("log", (a,))


def mean(a: Tensor) -> Tensor:
    """Mean over all entries, as a 1x1 tensor."""
    return a.graph.eval("mean", (a,))


def sum_rows(a: Tensor) -> Tensor:
    """Add the rows together: (n, m) -> (1, m)."""
    return sum_to(a, (1, a.shape[1]))


def sum_all(a: Tensor) -> Tensor:
    return sum_to(a, (1, 1))


def sum_to(a: Tensor, shape) -> Tensor:
    return a.graph.eval("sum_to", (a,), tuple(int(s) for s in shape))


def broadcast_to(a: Tensor, shape) -> Tensor:
    return a.graph.eval("broadcast_to", (a,), tuple(int(s) for s in shape))


def _slope(a: Tensor, alpha: float) -> Tensor:
    return a.graph.eval("slope", (a,), float(alpha))


def relu(a: Tensor) -> Tensor:
    return a.graph.eval("relu", (a,))


def leaky_relu(a: Tensor, alpha: float = 0.2) -> Tensor:
    """Leaky ReLU; the derivative at exactly 0 is taken to be ``alpha``."""
    return a.graph.eval("leaky_relu", (a,), float(alpha))


def sigmoid(a: Tensor) -> Tensor:
    return a.graph.eval("sigmoid", (a,))


def tanh(a: Tensor) -> Tensor:
    return a.graph.eval("tanh", (a,))


def softplus(a: Tensor) -> Tensor:
    """log(1 + e^a), evaluated without overflow."""
    return a.graph.eval("softplus", (a,))


def l2_norm_rows(a: Tensor) -> Tensor:
    """Euclidean norm of each row: (n, m) -> (n, 1)."""
    return a.graph.eval("l2_norm_rows", (a,))


# ----------------------------------------------------------------------


def grad_check_fd(graph: Graph, root: Tensor, leaves: Sequence[Tensor], h: float = 1e-5) -> float:
    """Max relative error between backward() and central differences.

    The function is the recorded graph itself: each leaf coordinate is
    perturbed by ``±h`` and the tape is replayed.  The error per coordinate
    is ``|analytic - numeric| / (|analytic| + 1e-8)``.
    """
    if h <= 0:
        raise ValueError(f"step h must be positive, got {h}")
    grads = graph.backward(root)
    worst = 0.0
    for leaf in leaves:
        analytic = grads[leaf.index].value if leaf.index in grads else np.zeros(leaf.shape)
        base = graph.nodes[leaf.index].value
        for pos in np.ndindex(base.shape):
            bumped = base.copy()
            bumped[pos] += h
            f_plus = graph.replay({leaf.index: bumped})[root.index][0, 0]
            bumped[pos] -= 2 * h
            f_minus = graph.replay({leaf.index: bumped})[root.index][0, 0]
            numeric = (f_plus - f_minus) / (2 * h)
            err = abs(analytic[pos] - numeric) / (abs(analytic[pos]) + 1e-8)
            worst = max(worst, err)
    return worst
