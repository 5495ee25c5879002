"""Loss values with exact gradients, plus a finite-difference verifier.

Objectives are ordinary Python functions written with :mod:`dlvkl.autodiff.ops`.
They receive a mapping of parameter name to :class:`~dlvkl.autodiff.Var` and
any extra positional arguments (batch, noise). Noise is always passed in, so
an objective is a deterministic function of its inputs.
"""

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, Var, backward
from .errors import DimensionMismatch, NonFiniteLoss


class ParamSet(Mapping):
    """Ordered collection of named float64 arrays.

    The flat vector layout is the concatenation of ``arr.ravel()`` for each
    name in insertion order; gradients use the same layout.
    """

    def __init__(self, arrays=None):
        self._arrays = {}
        for name, arr in (arrays or {}).items():
            self[name] = arr

    def __setitem__(self, name, arr):
        self._arrays[name] = np.array(arr, dtype=float)

    def __getitem__(self, name):
        return self._arrays[name]

    def __iter__(self):
        return iter(self._arrays)

    def __len__(self):
        return len(self._arrays)

    def __repr__(self):
        shapes = ", ".join(f"{k}{tuple(v.shape)}" for k, v in self._arrays.items())
        return f"ParamSet({shapes})"

    @property
    def total_dim(self):
        return int(sum(v.size for v in self._arrays.values()))

    def flatten(self):
        if not self._arrays:
            return np.zeros(0)
        return np.concatenate([v.ravel() for v in self._arrays.values()])

    def unflatten(self, vec):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.total_dim,):
            raise DimensionMismatch(f"expected vector of size {self.total_dim}, got {vec.shape}")
        out, offset = {}, 0
        for name, arr in self._arrays.items():
            out[name] = vec[offset : offset + arr.size].reshape(arr.shape)
            offset += arr.size
        return ParamSet(out)

    def copy(self):
        return ParamSet({k: v.copy() for k, v in self._arrays.items()})

    def slices(self):
        """Map each name to its slice in the flat layout."""
        out, offset = {}, 0
        for name, arr in self._arrays.items():
            out[name] = slice(offset, offset + arr.size)
            offset += arr.size
        return out


@dataclass
class NoiseBundle:
    """Standard-normal draws keyed by consumer (``"encoder"``, ``"flow"``, ``"lik"``...)."""

    draws: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.draws[key]

    def get(self, key, default=None):
        return self.draws.get(key, default)

    def __contains__(self, key):
        return key in self.draws

    @classmethod
    def draw(cls, rng, shapes):
        """Draw one array per ``{key: shape}`` entry, in sorted key order."""
        return cls({k: rng.standard_normal(shapes[k]) for k in sorted(shapes)})

    @classmethod
    def zeros(cls, shapes):
        return cls({k: np.zeros(s) for k, s in shapes.items()})


def _as_paramset(theta):
    if isinstance(theta, ParamSet):
        return theta, False
    return ParamSet({"theta": theta}), True


def value_and_grad(objective, theta, *args, **kwargs):
    """Evaluate ``objective(theta, *args)`` and its gradient.

    ``theta`` is a :class:`ParamSet` (the objective then receives a dict of
    Vars) or a bare array (the objective receives a single Var). The gradient
    is returned as a flat vector in ``theta``'s layout.

    Raises
    ------
    NonFiniteLoss
        If the objective value is NaN or infinite.
    """
    params, bare = _as_paramset(theta)
    leaves = {k: Var(v) for k, v in params.items()}
    with Tape() as tape:
        out = objective(leaves["theta"] if bare else leaves, *args, **kwargs)
    val = float(np.asarray(out.value if isinstance(out, Var) else out).reshape(()))
    if not np.isfinite(val):
        raise NonFiniteLoss(f"objective evaluated to {val}")
    grads = backward(out, list(leaves.values()), tape)
    flat = np.concatenate([g.ravel() for g in grads]) if grads else np.zeros(0)
    return val, flat


def evaluate(objective, theta, *args, **kwargs):
    """Objective value without recording a graph."""
    params, bare = _as_paramset(theta)
    out = objective(params["theta"] if bare else dict(params), *args, **kwargs)
    return float(np.asarray(out.value if isinstance(out, Var) else out).reshape(()))


def finite_diff_check(objective, theta, eps=1e-5, *args, return_details=False, **kwargs):
    """Largest relative error between autodiff and central differences.

    Relative error per coordinate is ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    if not 1e-6 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-6, 1e-3], got {eps}")
    params, bare = _as_paramset(theta)
    _, analytic = value_and_grad(objective, theta, *args, **kwargs)
    flat = params.flatten()
    numeric = np.empty_like(flat)
    for i in range(flat.size):
        up, down = flat.copy(), flat.copy()
        up[i] += eps
        down[i] -= eps
        fu = evaluate(objective, _rewrap(params, up, bare), *args, **kwargs)
        fd = evaluate(objective, _rewrap(params, down, bare), *args, **kwargs)
        numeric[i] = (fu - fd) / (2 * eps)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    rel = np.abs(analytic - numeric) / denom
    err = float(rel.max()) if rel.size else 0.0
    if return_details:
        return err, analytic, numeric
    return err


def _rewrap(params, vec, bare):
    p = params.unflatten(vec)
    return p["theta"] if bare else p
