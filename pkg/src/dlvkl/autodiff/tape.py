"""Minimal reverse-mode automatic differentiation over numpy arrays.

A :class:`Var` wraps a float64 array and remembers, for every input it was
computed from, a vector-Jacobian product closure. :func:`backward` walks the
recorded graph in reverse topological order and accumulates adjoints.

Operations on plain ndarrays never build a graph; only computations that
touch at least one ``Var`` are recorded.
"""

import numpy as np


class Var:
    """A node in the computation graph."""

    __slots__ = ("value", "parents")
    __array_ufunc__ = None  # make ndarray <op> Var dispatch to Var's reflected ops

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=float)
        # tuple of (parent Var, vjp: adjoint-of-output -> adjoint-of-parent)
        self.parents = parents

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Var({self.value!r})"

    def __float__(self):
        return float(self.value)

    @property
    def T(self):
        from . import ops

        return ops.transpose(self)

    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops

        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from . import ops

        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops

        return ops.div(other, self)

    def __neg__(self):
        from . import ops

        return ops.neg(self)

    def __pow__(self, p):
        from . import ops

        return ops.power(self, p)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)

    def __rmatmul__(self, other):
        from . import ops

        return ops.matmul(other, self)

    def __getitem__(self, index):
        from . import ops

        return ops.getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        from . import ops

        return ops.sum(self, axis=axis, keepdims=keepdims)


def value(x):
    """Underlying ndarray of a Var, or ``x`` itself as an array."""
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=float)


def is_var(x):
    return isinstance(x, Var)


class Tape:
    """Context manager listing every recorded node in creation order.

    Creation order is a topological order, so :func:`backward` can skip the
    graph search for roots recorded inside an active tape.
    """

    _active = None

    def __init__(self):
        self.nodes = []
        self._saved = None

    def __enter__(self):
        self._saved = Tape._active
        Tape._active = self
        return self

    def __exit__(self, *exc):
        Tape._active = self._saved
        return False


def record(out, pairs):
    """Wrap ``out`` in a Var if any input in ``pairs`` is a Var.

    ``pairs`` is an iterable of ``(input, vjp)``; non-Var inputs are dropped.
    """
    parents = tuple([(x, f) for x, f in pairs if type(x) is Var])
    if not parents:
        return out
    node = Var(out, parents)
    if Tape._active is not None:
        Tape._active.nodes.append(node)
    return node


def _toposort(root):
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
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root, wrt, tape=None):
    """Adjoints of scalar ``root`` with respect to each Var in ``wrt``.

    Returns a list of arrays aligned with ``wrt``; inputs that ``root`` does
    not depend on receive zeros. Pass the :class:`Tape` that recorded
    ``root`` to walk its node list instead of searching the graph.
    """
    wrt = list(wrt)
    if not isinstance(root, Var):
        return [np.zeros_like(v.value) for v in wrt]
    if root.value.size != 1:
        raise ValueError("backward() needs a scalar output")
    if tape is not None and tape.nodes and tape.nodes[-1] is root:
        order = tape.nodes
    else:
        order = _toposort(root)
    adj = {id(root): np.ones_like(root.value)}
    for node in reversed(order):
        g = adj.get(id(node))
        if g is None or not node.parents:
            continue
        for parent, vjp in node.parents:
            contrib = vjp(g)
            key = id(parent)
            if key in adj:
                adj[key] = adj[key] + contrib
            else:
                adj[key] = contrib
    out = []
    for v in wrt:
        g = adj.get(id(v))
        out.append(np.zeros_like(v.value) if g is None else np.reshape(g, v.shape))
    return out
