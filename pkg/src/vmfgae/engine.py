"""Small dense reverse-mode autodiff engine.

Expressions are built once as a static DAG of :class:`Node` objects and then
evaluated many times with different leaf bindings.  Every value is a 2-D
float64 array; scalars are ``(1, 1)``.  There is no broadcasting: operands of
elementwise ops must have identical shapes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ShapeError


class Node:
    __slots__ = ("op", "parents", "shape", "value", "grad", "arg", "name", "_order")

    def __init__(self, op, parents, shape, arg=None, name=None):
        self.op = op
        self.parents = parents
        self.shape = shape
        self.value = None
        self.grad = None
        self.arg = arg
        self.name = name
        self._order = None

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Node({self.op}{label}, shape={self.shape})"

    # operator sugar, kept to the explicit op set
    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, Node):
            return hadamard(self, other)
        return scalar_mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __sub__(self, other):
        return add(self, scalar_mul(other, -1.0))

    @property
    def T(self):
        return transpose(self)


def _as_matrix(value):
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"tensors are 2-D, got ndim={arr.ndim}")
    return arr


def leaf(value=None, name=None, shape=None):
    """Input leaf.  Either bind a value now or declare a shape for later binding."""
    if value is not None:
        arr = _as_matrix(value)
        node = Node("input", (), arr.shape, name=name)
        node.value = arr
        return node
    if shape is None:
        raise ShapeError("leaf needs a value or a shape")
    return Node("input", (), tuple(shape), name=name)


def bind(node, value):
    arr = _as_matrix(value)
    if arr.shape != node.shape:
        raise ShapeError(f"binding {arr.shape} to leaf {node.name!r} of shape {node.shape}")
    node.value = arr


def _same(op, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def matmul(a, b):
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shape mismatch {a.shape} @ {b.shape}")
    return Node("matmul", (a, b), (a.shape[0], b.shape[1]))


def add(a, b):
    _same("add", a, b)
    return Node("add", (a, b), a.shape)


def hadamard(a, b):
    _same("hadamard", a, b)
    return Node("hadamard", (a, b), a.shape)


def scalar_mul(a, c):
    return Node("scalar_mul", (a,), a.shape, arg=float(c))


def tanh(a):
    return Node("tanh", (a,), a.shape)


def logistic(a):
    return Node("logistic", (a,), a.shape)


def row_normalize(a):
    """Rows scaled to unit Euclidean norm; an all-zero row maps to e1 with zero gradient."""
    return Node("row_normalize", (a,), a.shape)


def reduce_sum(a):
    return Node("sum", (a,), (1, 1))


def reduce_mean(a):
    return Node("mean", (a,), (1, 1))


def squared_norm(a):
    return Node("squared_norm", (a,), (1, 1))


def log(a):
    return Node("log", (a,), a.shape)


def exp(a):
    return Node("exp", (a,), a.shape)


def transpose(a):
    return Node("transpose", (a,), (a.shape[1], a.shape[0]))


def householder(mu, x):
    """Reflect each row of ``x`` by the Householder map sending e1 to the matching row of ``mu``."""
    _same("householder", mu, x)
    return Node("householder", (mu, x), mu.shape)


def inf_normalize(a):
    """Divide by the largest row sum (the matrix infinity norm for nonnegative input)."""
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"inf_normalize: square input required, got {a.shape}")
    return Node("inf_normalize", (a,), a.shape)


# ---------------------------------------------------------------------------
# forward / backward rules


def _row_norms(x):
    return np.sqrt(np.einsum("ij,ij->i", x, x))[:, None]


def _fwd_row_normalize(node, x):
    norms = _row_norms(x)
    zero = norms[:, 0] == 0.0
    out = x / np.where(zero[:, None], 1.0, norms)
    if zero.any():
        out[zero] = 0.0
        out[zero, 0] = 1.0
    node.arg = (norms, zero)
    return out


def _bwd_row_normalize(node, g):
    norms, zero = node.arg
    y = node.value
    proj = np.einsum("ij,ij->i", y, g)[:, None]
    out = (g - y * proj) / np.where(zero[:, None], 1.0, norms)
    if zero.any():
        out[zero] = 0.0
    return (out,)


def _fwd_householder(node, mu, x):
    u = -mu.copy()
    u[:, 0] += 1.0
    s = np.einsum("ij,ij->i", u, u)
    t = np.einsum("ij,ij->i", u, x)
    tiny = s < 1e-30
    coef = np.where(tiny, 0.0, 2.0 * t / np.where(tiny, 1.0, s))
    node.arg = (u, s, t, tiny)
    return x - coef[:, None] * u


def _bwd_householder(node, g):
    u, s, t, tiny = node.arg
    x = node.parents[1].value
    safe = np.where(tiny, 1.0, s)
    gu = np.einsum("ij,ij->i", g, u)
    d_u = -2.0 * (
        (gu / safe)[:, None] * x
        + (t / safe)[:, None] * g
        - (2.0 * t * gu / safe**2)[:, None] * u
    )
    d_x = g - (2.0 * gu / safe)[:, None] * u
    d_u[tiny] = 0.0
    d_x[tiny] = g[tiny]
    return (-d_u, d_x)


def _fwd_inf_normalize(node, a):
    sums = a.sum(axis=1)
    r = int(np.argmax(sums))
    s = sums[r]
    node.arg = (r, s)
    if s == 0.0:
        return a.copy()
    return a / s


def _bwd_inf_normalize(node, g):
    r, s = node.arg
    if s == 0.0:
        return (g,)
    a = node.parents[0].value
    out = g / s
    out[r, :] -= np.sum(g * a) / (s * s)
    return (out,)


def _logistic(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


_FORWARD = {
    "matmul": lambda n, a, b: a @ b,
    "add": lambda n, a, b: a + b,
    "hadamard": lambda n, a, b: a * b,
    "scalar_mul": lambda n, a: n.arg * a,
    "tanh": lambda n, a: np.tanh(a),
    "logistic": lambda n, a: _logistic(a),
    "row_normalize": _fwd_row_normalize,
    "sum": lambda n, a: np.array([[a.sum()]]),
    "mean": lambda n, a: np.array([[a.mean()]]),
    "squared_norm": lambda n, a: np.array([[np.einsum("ij,ij->", a, a)]]),
    "log": lambda n, a: np.log(a),
    "exp": lambda n, a: np.exp(a),
    "transpose": lambda n, a: a.T.copy(),
    "householder": _fwd_householder,
    "inf_normalize": _fwd_inf_normalize,
}


def _parent_vals(n):
    return [p.value for p in n.parents]


_BACKWARD = {
    "matmul": lambda n, g: (g @ n.parents[1].value.T, n.parents[0].value.T @ g),
    "add": lambda n, g: (g, g),
    "hadamard": lambda n, g: (g * n.parents[1].value, g * n.parents[0].value),
    "scalar_mul": lambda n, g: (n.arg * g,),
    "tanh": lambda n, g: (g * (1.0 - n.value * n.value),),
    "logistic": lambda n, g: (g * n.value * (1.0 - n.value),),
    "row_normalize": _bwd_row_normalize,
    "sum": lambda n, g: (np.full(n.parents[0].shape, g[0, 0]),),
    "mean": lambda n, g: (
        np.full(n.parents[0].shape, g[0, 0] / (n.parents[0].shape[0] * n.parents[0].shape[1])),
    ),
    "squared_norm": lambda n, g: (2.0 * g[0, 0] * n.parents[0].value,),
    "log": lambda n, g: (g / n.parents[0].value,),
    "exp": lambda n, g: (g * n.value,),
    "transpose": lambda n, g: (g.T,),
    "householder": _bwd_householder,
    "inf_normalize": _bwd_inf_normalize,
}

OP_KINDS = ("input",) + tuple(_FORWARD)


def topological_order(root):
    if root._order is not None:
        return root._order
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    root._order = order
    return order


def evaluate(root, bindings=None):
    """Run the forward pass and return the root's value.

    Intermediate values are cached on the nodes for a following
    :func:`gradient` call.
    """
    if bindings:
        for node, value in bindings.items():
            bind(node, value)
    # non-finite results are reported below, so numpy's own warnings are noise
    with np.errstate(all="ignore"):
        for node in topological_order(root):
            if node.op == "input":
                if node.value is None:
                    raise ShapeError(f"leaf {node.name!r} is unbound")
                continue
            out = _FORWARD[node.op](node, *_parent_vals(node))
            if not np.isfinite(out).all():
                raise NumericalError(f"non-finite value produced by {node.op}")
            node.value = out
    return root.value


def gradient(root, wrt):
    """Reverse-mode gradients of a scalar root with respect to the leaves ``wrt``.

    Uses the values cached by the last :func:`evaluate`; if the root has never
    been evaluated it is evaluated first.  Leaves not reachable from the root
    get a zero gradient.
    """
    if root.shape != (1, 1):
        raise ShapeError(f"gradient needs a scalar root, got shape {root.shape}")
    order = topological_order(root)
    if root.value is None:
        evaluate(root)
    for node in order:
        node.grad = None
    root.grad = np.ones((1, 1))
    for node in reversed(order):
        g = node.grad
        if g is None or node.op == "input":
            continue
        contribs = _BACKWARD[node.op](node, g)
        for parent, c in zip(node.parents, contribs):
            parent.grad = c if parent.grad is None else parent.grad + c
    out = []
    for w in wrt:
        g = w.grad if w.grad is not None else np.zeros(w.shape)
        out.append(np.array(g, dtype=np.float64))
    for node in order:
        node.grad = None
    return out


def value_and_grad(root, wrt, bindings=None):
    value = evaluate(root, bindings)[0, 0]
    return value, gradient(root, wrt)


def finite_difference_check(root, node, epsilon=1e-5):
    """Max relative error between central differences and reverse-mode gradients.

    The error per entry is ``|fd - ad| / max(1, |fd|, |ad|)``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    evaluate(root)
    (ad,) = gradient(root, [node])
    base = node.value
    fd = np.empty_like(base)
    for idx in np.ndindex(base.shape):
        saved = base[idx]
        base[idx] = saved + epsilon
        up = evaluate(root)[0, 0]
        base[idx] = saved - epsilon
        down = evaluate(root)[0, 0]
        base[idx] = saved
        fd[idx] = (up - down) / (2.0 * epsilon)
    evaluate(root)
    denom = np.maximum(1.0, np.maximum(np.abs(fd), np.abs(ad)))
    return float(np.max(np.abs(fd - ad) / denom)) if fd.size else 0.0


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")

    def copy(self):
        return AdamState(self.lr, self.beta1, self.beta2, self.eps, self.step,
                         [a.copy() for a in self.m], [a.copy() for a in self.v])


def adam_step(params, grads, state):
    """One bias-corrected Adam update.  Returns new parameter arrays and a new state."""
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} params but {len(grads)} grads")
    if not state.m:
        m = [np.zeros_like(p) for p in params]
        v = [np.zeros_like(p) for p in params]
    else:
        m, v = state.m, state.v
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_p, new_m, new_v = [], [], []
    for p, g, mi, vi in zip(params, grads, m, v):
        if p.shape != g.shape or p.shape != mi.shape:
            raise ShapeError(f"adam: parameter {p.shape} vs gradient {g.shape}")
        mi = b1 * mi + (1.0 - b1) * g
        vi = b2 * vi + (1.0 - b2) * (g * g)
        new_p.append(p - state.lr * (mi / c1) / (np.sqrt(vi / c2) + state.eps))
        new_m.append(mi)
        new_v.append(vi)
    return new_p, AdamState(state.lr, b1, b2, state.eps, t, new_m, new_v)


class Adam:
    """Adam bound to a fixed list of parameter leaves; updates leaf values in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.state = AdamState(lr, beta1, beta2, eps)

    def step(self, grads):
        new, self.state = adam_step([p.value for p in self.params], grads, self.state)
        for p, value in zip(self.params, new):
            p.value = value
