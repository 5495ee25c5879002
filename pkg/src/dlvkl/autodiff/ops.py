"""Differentiable array primitives.

Every function accepts ndarrays or :class:`Var` inputs. With no Var among
the inputs the plain ndarray result is returned and nothing is recorded.
"""

import builtins

import numpy as np
from scipy.linalg import solve_triangular

from .. import numerics
from .tape import Var, record, value


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b):
    va, vb = value(a), value(b)
    return record(
        va + vb,
        [(a, lambda g: _unbroadcast(g, va.shape)), (b, lambda g: _unbroadcast(g, vb.shape))],
    )


def sub(a, b):
    va, vb = value(a), value(b)
    return record(
        va - vb,
        [(a, lambda g: _unbroadcast(g, va.shape)), (b, lambda g: _unbroadcast(-g, vb.shape))],
    )


def mul(a, b):
    va, vb = value(a), value(b)
    return record(
        va * vb,
        [
            (a, lambda g: _unbroadcast(g * vb, va.shape)),
            (b, lambda g: _unbroadcast(g * va, vb.shape)),
        ],
    )


def div(a, b):
    va, vb = value(a), value(b)
    out = va / vb
    return record(
        out,
        [
            (a, lambda g: _unbroadcast(g / vb, va.shape)),
            (b, lambda g: _unbroadcast(-g * out / vb, vb.shape)),
        ],
    )


def neg(a):
    return record(-value(a), [(a, lambda g: -g)])


def power(a, p):
    """``a ** p`` for a constant exponent ``p``."""
    va = value(a)
    return record(va**p, [(a, lambda g: g * p * va ** (p - 1))])


def square(a):
    va = value(a)
    return record(va * va, [(a, lambda g: 2.0 * g * va)])


def sqrt(a):
    out = np.sqrt(value(a))
    return record(out, [(a, lambda g: 0.5 * g / out)])


def exp(a):
    out = np.exp(value(a))
    return record(out, [(a, lambda g: g * out)])


def log(a):
    va = value(a)
    return record(np.log(va), [(a, lambda g: g / va)])


def _sigmoid(x):
    # split by sign for overflow safety
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(a):
    out = _sigmoid(np.asarray(value(a)))
    return record(out, [(a, lambda g: g * out * (1.0 - out))])


def softplus(a):
    va = value(a)
    out = np.logaddexp(0.0, va)
    return record(out, [(a, lambda g: g * _sigmoid(np.asarray(va)))])


def log_sigmoid(a):
    """``log(sigmoid(a)) = -softplus(-a)``, stable for large ``|a|``."""
    va = value(a)
    out = -np.logaddexp(0.0, -va)
    return record(out, [(a, lambda g: g * _sigmoid(np.asarray(-va)))])


def relu(a):
    va = value(a)
    mask = va > 0
    return record(np.where(mask, va, 0.0), [(a, lambda g: g * mask)])


def clamp_min(a, floor):
    """Elementwise ``max(a, floor)``; gradient is zero where clamped."""
    va = value(a)
    mask = va > floor
    return record(np.where(mask, va, floor), [(a, lambda g: g * mask)])


def sum(a, axis=None, keepdims=False):
    va = value(a)
    out = np.sum(va, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, va.shape).copy()

    return record(out, [(a, vjp)])


def mean(a, axis=None, keepdims=False):
    va = value(a)
    count = va.size if axis is None else np.prod([va.shape[i] for i in np.atleast_1d(axis)])
    return div(sum(a, axis=axis, keepdims=keepdims), float(count))


def logsumexp(a, axis=None, keepdims=False):
    va = value(a)
    m = np.max(va, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    s = np.sum(np.exp(va - m), axis=axis, keepdims=True)
    out_k = np.log(s) + m
    out = out_k if keepdims else np.squeeze(out_k, axis=axis)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return g * np.exp(va - out_k)

    return record(out, [(a, vjp)])


def matmul(a, b):
    va, vb = value(a), value(b)
    out = va @ vb

    def vjp_a(g):
        if vb.ndim == 1:
            return np.multiply.outer(g, vb) if va.ndim == 2 else g * vb
        if va.ndim == 1:
            return vb @ g
        return _unbroadcast(g @ np.swapaxes(vb, -1, -2), va.shape)

    def vjp_b(g):
        if va.ndim == 1:
            return np.multiply.outer(va, g) if vb.ndim == 2 else g * va
        if vb.ndim == 1:
            return g @ va if g.ndim == 1 else np.swapaxes(va, -1, -2) @ g
        return _unbroadcast(np.swapaxes(va, -1, -2) @ g, vb.shape)

    return record(out, [(a, vjp_a), (b, vjp_b)])


def dense(x, W, b, relu=False):
    """Fused ``x @ W + b`` for 2-D ``x``, optionally followed by ReLU."""
    vx, vW, vb = value(x), value(W), value(b)
    out = vx @ vW + vb
    mask = None
    if relu:
        mask = out > 0
        out = np.where(mask, out, 0.0)

    def pre(g):
        return g if mask is None else g * mask

    return record(
        out,
        [
            (x, lambda g: pre(g) @ vW.T),
            (W, lambda g: vx.T @ pre(g)),
            (b, lambda g: _unbroadcast(pre(g), vb.shape)),
        ],
    )


def transpose(a, axes=None):
    va = value(a)
    out = np.transpose(va, axes)
    inv = None if axes is None else np.argsort(axes)
    return record(out, [(a, lambda g: np.transpose(g, inv))])


def reshape(a, shape):
    va = value(a)
    return record(np.reshape(va, shape), [(a, lambda g: np.reshape(g, va.shape))])


def getitem(a, index):
    va = value(a)

    def vjp(g):
        out = np.zeros_like(va)
        np.add.at(out, index, g)
        return out

    return record(va[index], [(a, vjp)])


def scatter(a, shape, index):
    """Place the entries of ``a`` at ``index`` inside a zero array of ``shape``."""
    out = np.zeros(shape)
    out[index] = value(a)
    return record(out, [(a, lambda g: g[index])])


def concatenate(xs, axis=0):
    vals = [value(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    bounds = np.cumsum([0] + [v.shape[axis] for v in vals])
    pairs = []
    for x, lo, hi in zip(xs, bounds[:-1], bounds[1:]):
        sl = [builtins.slice(None)] * out.ndim
        sl[axis] = builtins.slice(int(lo), int(hi))
        sl = tuple(sl)
        pairs.append((x, lambda g, sl=sl: g[sl]))
    return record(out, pairs)


def stack(xs, axis=0):
    vals = [value(x) for x in xs]
    out = np.stack(vals, axis=axis)
    pairs = [(x, lambda g, i=i: np.take(g, i, axis=axis)) for i, x in enumerate(xs)]
    return record(out, pairs)


def diagonal(a):
    """Main diagonal of a square matrix."""
    va = value(a)
    n = va.shape[0]

    def vjp(g):
        out = np.zeros_like(va)
        out[np.arange(n), np.arange(n)] = g
        return out

    return record(np.diagonal(va).copy(), [(a, vjp)])


def _phi(X):
    out = np.tril(X)
    out[np.diag_indices_from(out)] *= 0.5
    return out


def cholesky(a, base_jitter=None):
    """Lower Cholesky factor of ``a`` with escalating jitter.

    With the default scale-relative jitter the ratio of jitter to mean
    absolute diagonal is held constant for differentiation (so the factored
    matrix scales with ``a``); an explicit ``base_jitter`` is a constant.
    """
    va = value(a)
    fac = numerics.cholesky_jitter(va, base_jitter)
    L = fac.lower
    n = va.shape[0]
    diag = np.diag(va)
    scale = np.mean(np.abs(diag)) if n else 0.0
    ratio = fac.jitter_used / scale if base_jitter is None and scale > 0 else 0.0

    def vjp(g):
        P = _phi(L.T @ g)
        S = solve_triangular(L, solve_triangular(L, P.T, lower=True, trans=1).T, lower=True, trans=1)
        S = 0.5 * (S + S.T)
        if ratio:
            S[np.diag_indices(n)] += ratio / n * np.trace(S) * np.sign(diag)
        return S

    return record(L, [(a, vjp)])


def solve_tri(L, B, transposed=False):
    """Solve ``L X = B`` (``L^T X = B`` if ``transposed``) for lower-triangular ``L``."""
    vL, vB = value(L), value(B)
    X = solve_triangular(vL, vB, lower=True, trans=1 if transposed else 0)
    Xm = X if X.ndim == 2 else X[:, None]

    def vjp_B(g):
        return solve_triangular(vL, g, lower=True, trans=0 if transposed else 1)

    def vjp_L(g):
        gB = vjp_B(g)
        gBm = gB if gB.ndim == 2 else gB[:, None]
        if transposed:
            return -np.tril(Xm @ gBm.T)
        return -np.tril(gBm @ Xm.T)

    return record(X, [(L, vjp_L), (B, vjp_B)])


def where_const(mask, a, b):
    """``np.where`` with a constant boolean mask."""
    va, vb = value(a), value(b)
    out = np.where(mask, va, vb)
    return record(
        out,
        [
            (a, lambda g: _unbroadcast(np.where(mask, g, 0.0), va.shape)),
            (b, lambda g: _unbroadcast(np.where(mask, 0.0, g), vb.shape)),
        ],
    )


def as_var(x):
    return x if isinstance(x, Var) else Var(x)
