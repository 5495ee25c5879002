"""Stationary RBF kernel with per-dimension length-scales (ARD)."""

from dataclasses import dataclass

import numpy as np

from .autodiff import ops, value
from .errors import DimensionMismatch


@dataclass
class KernelParams:
    """Unconstrained RBF parameters.

    Fields may hold ndarrays or autodiff Vars; ``log_signal_variance`` is a
    shape-``(1,)`` array so it can live in a :class:`~dlvkl.gradengine.ParamSet`.
    """

    log_lengthscales: object
    log_signal_variance: object

    @classmethod
    def init(cls, dim, lengthscale=None, signal_variance=1.0):
        """Default initialization: length-scales ``0.1 * sqrt(dim)``, unit variance."""
        if lengthscale is None:
            lengthscale = 0.1 * np.sqrt(dim)
        return cls(
            np.full(dim, np.log(lengthscale)),
            np.array([np.log(signal_variance)]),
        )

    @property
    def dim(self):
        return value(self.log_lengthscales).shape[0]

    @property
    def signal_variance(self):
        return float(np.exp(value(self.log_signal_variance)).reshape(()))

    @property
    def lengthscales(self):
        return np.exp(value(self.log_lengthscales))


def _check(p, X):
    if value(X).ndim != 2 or value(X).shape[1] != p.dim:
        raise DimensionMismatch(
            f"inputs of shape {value(X).shape} do not match {p.dim} length-scales"
        )


def kmat(p, X, X2=None):
    """Cross-covariance ``k(X_i, X2_j) = h^2 exp(-0.5 sum_k (x_k - x2_k)^2 / l_k^2)``."""
    X2 = X if X2 is None else X2
    _check(p, X)
    _check(p, X2)
    inv_ls = ops.exp(-p.log_lengthscales)
    Xs = X * inv_ls
    X2s = X2 * inv_ls
    n, n2 = value(X).shape[0], value(X2).shape[0]
    diff = ops.reshape(Xs, (n, 1, p.dim)) - ops.reshape(X2s, (1, n2, p.dim))
    sq = ops.sum(ops.square(diff), axis=2)
    return ops.exp(p.log_signal_variance - 0.5 * sq)


def kdiag(p, X):
    """Prior variances ``k(x, x) = h^2`` for every row of ``X``."""
    _check(p, X)
    n = value(X).shape[0]
    return ops.exp(p.log_signal_variance) * np.ones(n)
