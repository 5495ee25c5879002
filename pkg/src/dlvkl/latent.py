"""Amortized encoders, encoded inducing inputs and prior-mean projections."""

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ops, value
from .errors import DimensionMismatch, ProjectionNotFitted

IID = "iid"
SDE = "sde"
HYBRID = "hybrid"
PRIOR_KINDS = (IID, SDE, HYBRID)


def hidden_width(d_in):
    return max(2 * d_in, 10)


def glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_mlp(rng, prefix, sizes):
    """Glorot-uniform weights and zero biases for consecutive ``sizes``."""
    out = {}
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        out[f"{prefix}.W{i}"] = glorot(rng, a, b)
        out[f"{prefix}.b{i}"] = np.zeros(b)
    return out


def mlp(params, prefix, X, n_layers):
    """ReLU trunk: ``n_layers`` affine maps, each followed by ReLU."""
    h = X
    for i in range(n_layers):
        h = ops.dense(h, params[f"{prefix}.W{i}"], params[f"{prefix}.b{i}"], relu=True)
    return h


@dataclass
class EncoderParams:
    """MLP trunk plus linear mean head and softplus variance head.

    Wraps a parameter mapping (ndarrays or Vars) using the names written by
    :meth:`init`. ``var_head`` is False for the deterministic (DKL) encoder.
    """

    params: dict
    n_layers: int = 3
    prefix: str = "enc"
    var_head: bool = True

    @staticmethod
    def init(rng, d_in, d_z, width=None, n_layers=3, prefix="enc", var_head=True):
        width = hidden_width(d_in) if width is None else width
        p = init_mlp(rng, prefix, [d_in] + [width] * n_layers)
        p[f"{prefix}.Wmu"] = glorot(rng, width, d_z)
        p[f"{prefix}.bmu"] = np.zeros(d_z)
        if var_head:
            p[f"{prefix}.Wvar"] = glorot(rng, width, d_z)
            p[f"{prefix}.bvar"] = np.zeros(d_z)
        return p

    def trunk(self, X):
        return mlp(self.params, self.prefix, X, self.n_layers)

    def mean(self, X):
        h = self.trunk(X)
        return ops.dense(h, self.params[f"{self.prefix}.Wmu"], self.params[f"{self.prefix}.bmu"])


def encode_gaussian(enc, X):
    """Means and variances of ``q(z | x) = N(mu(x), diag(nu(x)))``.

    ``mu = Linear(MLP(x))`` and ``nu = Softplus(Linear(MLP(x)))``.
    """
    h = enc.trunk(X)
    p, pre = enc.params, enc.prefix
    mu = ops.dense(h, p[f"{pre}.Wmu"], p[f"{pre}.bmu"])
    nu = ops.softplus(ops.dense(h, p[f"{pre}.Wvar"], p[f"{pre}.bvar"]))
    return mu, nu


def encode_deterministic(enc, X):
    """DKL map ``z = Linear(MLP(x))`` (the mean head only)."""
    return enc.mean(X)


def encode_inducing(enc, inducing_inputs_raw):
    """Latent inducing positions: the encoder mean at the raw inducing inputs.

    The encoded positions are nominally Gaussian; the mean is what enters
    the kernel.
    """
    return enc.mean(inducing_inputs_raw)


@dataclass
class Projection:
    """Maps inputs of width ``d_x`` to prior means of width ``d_z``.

    ``kind`` is ``"identity"``, ``"zeropad"`` or ``"pca"``; use :meth:`fit`
    to pick the kind and estimate PCA components from training inputs.
    """

    d_x: int
    d_z: int
    kind: str = "identity"
    center: np.ndarray = None
    components: np.ndarray = None

    @classmethod
    def fit(cls, X, d_z):
        X = np.asarray(X, dtype=float)
        d_x = X.shape[1]
        if d_z == d_x:
            return cls(d_x, d_z, "identity")
        if d_z > d_x:
            return cls(d_x, d_z, "zeropad")
        center = X.mean(axis=0)
        cov = np.cov(X - center, rowvar=False, bias=True).reshape(d_x, d_x)
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1][:d_z]
        comps = evecs[:, order]
        # fix eigenvector signs: largest-magnitude entry positive
        signs = np.sign(comps[np.argmax(np.abs(comps), axis=0), np.arange(d_z)])
        comps = comps * np.where(signs == 0, 1.0, signs)
        return cls(d_x, d_z, "pca", center, comps)

    def to_dict(self):
        return {
            "d_x": self.d_x,
            "d_z": self.d_z,
            "kind": self.kind,
            "center": None if self.center is None else self.center.tolist(),
            "components": None if self.components is None else self.components.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        arr = lambda v: None if v is None else np.asarray(v, dtype=float)
        return cls(d["d_x"], d["d_z"], d["kind"], arr(d["center"]), arr(d["components"]))


def prior_mean_projection(proj, X):
    """Prior mean for each row of ``X``: identity, zero padding or PCA scores."""
    X = np.asarray(value(X), dtype=float)
    if X.shape[1] != proj.d_x:
        raise DimensionMismatch(f"expected {proj.d_x} input columns, got {X.shape[1]}")
    if proj.kind == "identity":
        return X
    if proj.kind == "zeropad":
        return np.concatenate([X, np.zeros((X.shape[0], proj.d_z - proj.d_x))], axis=1)
    if proj.components is None:
        raise ProjectionNotFitted("PCA projection used before fitting components")
    return (X - proj.center) @ proj.components


@dataclass
class PriorSpec:
    """Latent prior: i.i.d. standard normal, SDE, or hybrid (SDE with ``beta < 1``)."""

    kind: str = SDE
    beta: float = 1e-2
    projection: Projection = field(default=None)

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ValueError(f"unknown prior {self.kind!r}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")

    @property
    def is_iid(self):
        return self.kind == IID


def gaussian_kl_diag(mu_q, var_q, mu_p, var_p):
    """Per-row ``KL[N(mu_q, var_q) || N(mu_p, var_p)]`` for diagonal Gaussians."""
    terms = ops.log(var_p) - ops.log(var_q) + (var_q + ops.square(mu_q - mu_p)) / var_p - 1.0
    return 0.5 * ops.sum(terms, axis=1)
