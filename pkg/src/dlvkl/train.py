"""Adam and the minibatch training loop."""

import time
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .errors import EmptyDataset, NonFiniteGradient, NonFiniteLoss
from .gradengine import NoiseBundle, ParamSet, value_and_grad


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, dim, lr=5e-3):
        return cls(np.zeros(dim), np.zeros(dim), 0, lr)


def adam_step(theta, grad, st):
    """One bias-corrected Adam update (minimization). Returns ``(theta, state)``."""
    grad = np.asarray(grad, dtype=float)
    if grad.shape != st.m.shape:
        raise ValueError(f"gradient of shape {grad.shape} does not match state {st.m.shape}")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradient("gradient has non-finite entries")
    step = st.step + 1
    m = st.beta1 * st.m + (1 - st.beta1) * grad
    v = st.beta2 * st.v + (1 - st.beta2) * grad * grad
    m_hat = m / (1 - st.beta1**step)
    v_hat = v / (1 - st.beta2**step)
    theta = theta - st.lr * m_hat / (np.sqrt(v_hat) + st.eps)
    return theta, AdamState(m, v, step, st.lr, st.beta1, st.beta2, st.eps)


@dataclass
class TrainSchedule:
    iterations: int = 3000
    batch_size: int = 256
    learning_rate: float = 5e-3
    seed: int = 0
    eval_every: int = 50

    def __post_init__(self):
        for name in ("iterations", "batch_size", "eval_every"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class Trace:
    """ELBO checkpoints recorded during :func:`fit`.

    ``elbos`` holds the minibatch ELBO estimate (scaled to the full data
    set) at each recorded iteration.
    """

    iterations: list = field(default_factory=list)
    elbos: list = field(default_factory=list)
    wall_time: float = 0.0

    def append(self, iteration, elbo):
        self.iterations.append(int(iteration))
        self.elbos.append(float(elbo))

    def rows(self):
        return list(zip(self.iterations, self.elbos))


class TrainingAborted(NonFiniteLoss):
    """Training hit a non-finite loss; carries the partial trace and last good state."""

    def __init__(self, message, trace, state):
        super().__init__(message)
        self.trace = trace
        self.state = state


class MinibatchSampler:
    """Without-replacement minibatches, reshuffled every epoch."""

    def __init__(self, n, batch_size, rng):
        self.n = n
        self.batch_size = min(batch_size, n)
        self.rng = rng
        self._perm = None
        self._pos = n

    def next(self):
        if self._pos + self.batch_size > self.n:
            self._perm = self.rng.permutation(self.n)
            self._pos = 0
        idx = self._perm[self._pos : self._pos + self.batch_size]
        self._pos += self.batch_size
        return idx


def fit(ms, X, Y, sched, trainable=None, callback=None):
    """Maximize the ELBO of ``ms`` on ``(X, Y)`` with Adam.

    ``trainable`` optionally restricts optimization to the named parameters.
    Returns ``(fitted_state, trace)``; ``ms`` is left untouched.

    Raises
    ------
    EmptyDataset
        If ``X`` has no rows.
    TrainingAborted
        On a non-finite loss or gradient; the exception carries the partial
        trace and the last finite state.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n = X.shape[0]
    if n == 0:
        raise EmptyDataset("cannot train on an empty data set")
    params = ms.params.copy()
    names = list(params) if trainable is None else [k for k in params if k in set(trainable)]
    fixed = {k: params[k] for k in params if k not in names}
    free = ParamSet({k: params[k] for k in names})
    theta = free.flatten()
    adam = AdamState.zeros(theta.size, sched.learning_rate)
    sampler = MinibatchSampler(n, sched.batch_size, rngmod.stream(sched.seed, "minibatch"))
    noise_rng = rngmod.stream(sched.seed, "noise")
    trace = Trace()
    start = time.perf_counter()

    def loss(p, Xb, Yb, noise):
        return -ms.objective({**fixed, **p}, Xb, Yb, noise, n) / n

    current = free
    for it in range(1, sched.iterations + 1):
        idx = sampler.next()
        Xb, Yb = X[idx], Y[idx]
        noise = NoiseBundle.draw(noise_rng, ms.noise_shapes(len(idx)))
        try:
            val, grad = value_and_grad(loss, current, Xb, Yb, noise)
            theta, adam = adam_step(theta, grad, adam)
        except (NonFiniteLoss, NonFiniteGradient) as exc:
            trace.wall_time = time.perf_counter() - start
            raise TrainingAborted(
                f"non-finite objective at iteration {it}: {exc}", trace, _merge(ms, fixed, current)
            ) from exc
        if it % sched.eval_every == 0 or it == 1 or it == sched.iterations:
            trace.append(it, -val * n)
            if not np.all(np.isfinite(theta)):
                raise TrainingAborted(f"non-finite parameters at iteration {it}", trace, _merge(ms, fixed, current))
            if callback is not None:
                callback(it, -val * n)
        current = free.unflatten(theta)
    trace.wall_time = time.perf_counter() - start
    return _merge(ms, fixed, current), trace


def _merge(ms, fixed, free):
    merged = ParamSet({k: (fixed[k] if k in fixed else free[k]) for k in ms.params})
    return ms.with_params(merged)
