"""Observation models: expected log-likelihoods and predictive summaries."""

from dataclasses import dataclass

import numpy as np

from .autodiff import ops, value
from .errors import InvalidLabel

GAUSSIAN = "gaussian"
BERNOULLI = "bernoulli"
CATEGORICAL = "categorical"
KINDS = (GAUSSIAN, BERNOULLI, CATEGORICAL)

LOG_2PI = np.log(2 * np.pi)


@dataclass
class Likelihood:
    """Observation model.

    ``log_noise_variances`` holds one log variance per output (Gaussian
    only) and may be an autodiff Var during training. ``mc_samples`` sets
    the number of reparameterized draws for the non-Gaussian models.
    """

    kind: str = GAUSSIAN
    log_noise_variances: object = None
    mc_samples: int = 8
    num_classes: int = 2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown likelihood {self.kind!r}")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")

    @property
    def latent_dim(self):
        """Number of latent GP outputs this model consumes."""
        if self.kind == CATEGORICAL:
            return self.num_classes
        if self.kind == BERNOULLI:
            return 1
        return value(self.log_noise_variances).shape[0]

    def with_noise(self, log_noise_variances):
        return Likelihood(self.kind, log_noise_variances, self.mc_samples, self.num_classes)

    def noise_shape(self, n):
        """Shape of the MC draws ``expected_log_lik`` needs for ``n`` points."""
        if self.kind == GAUSSIAN:
            return None
        return (self.mc_samples, n, self.latent_dim)


def _labels(lik, y, k):
    y = np.asarray(value(y))
    labels = np.rint(y).astype(int).reshape(-1)
    if np.any(np.abs(y.reshape(-1) - labels) > 1e-9) or labels.min() < 0 or labels.max() >= k:
        raise InvalidLabel(f"labels must be integers in [0, {k}) for {lik.kind} likelihood")
    return labels


def expected_log_lik(lik, Y, mu, var, noise=None):
    """Sum over points and outputs of ``E_q(f)[log p(y | f)]``.

    ``mu`` and ``var`` are ``n x d`` latent moments. The Gaussian case is
    closed form; Bernoulli (logistic link) and Categorical (softmax link)
    average ``log p`` over reparameterized draws ``f = mu + sqrt(var) * eps``
    using ``noise`` of shape ``(mc, n, d)``.
    """
    if lik.kind == GAUSSIAN:
        noise_var = ops.exp(lik.log_noise_variances)
        r2 = ops.square(Y - mu)
        terms = -0.5 * (LOG_2PI + lik.log_noise_variances) - 0.5 * (r2 + var) / noise_var
        return ops.sum(terms)
    n = value(mu).shape[0]
    eps = _mc_noise(lik, noise, n)
    f = ops.reshape(mu, (1,) + value(mu).shape) + ops.sqrt(ops.reshape(var, (1,) + value(var).shape)) * eps
    mc = eps.shape[0]
    if lik.kind == BERNOULLI:
        labels = _labels(lik, Y, 2).astype(float)[None, :, None]
        logp = labels * ops.log_sigmoid(f) + (1.0 - labels) * ops.log_sigmoid(-f)
        return ops.sum(logp) / mc
    labels = _labels(lik, Y, lik.num_classes)
    onehot = np.eye(lik.num_classes)[labels][None]
    logp = ops.sum(f * onehot, axis=2) - ops.logsumexp(f, axis=2)
    return ops.sum(logp) / mc


def _mc_noise(lik, noise, n):
    if noise is None:
        raise ValueError(f"{lik.kind} likelihood needs MC noise of shape {lik.noise_shape(n)}")
    eps = np.asarray(noise, dtype=float)
    if eps.ndim == 2:
        eps = eps[None]
    return eps


def _softmax(f, axis=-1):
    f = f - f.max(axis=axis, keepdims=True)
    e = np.exp(f)
    return e / e.sum(axis=axis, keepdims=True)


def predictive(lik, mu, var, noise=None):
    """Predictive summary at test points.

    Gaussian: ``(mean, variance)`` with the noise variance added.
    Classification: ``n x k`` class probabilities averaged over MC draws of
    ``f`` (``noise`` shape ``(s, n, d)``); Bernoulli returns two columns.
    """
    mu, var = np.asarray(value(mu)), np.asarray(value(var))
    if lik.kind == GAUSSIAN:
        return mu, var + np.exp(np.asarray(value(lik.log_noise_variances)))
    eps = _mc_noise(lik, noise, mu.shape[0])
    f = mu[None] + np.sqrt(var)[None] * eps
    if lik.kind == BERNOULLI:
        p1 = ops._sigmoid(f[..., 0]).mean(axis=0)
        return np.stack([1.0 - p1, p1], axis=1)
    return _softmax(f, axis=2).mean(axis=0)
