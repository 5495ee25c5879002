import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, n, cond=10.0):
    """SPD matrix with eigenvalues spread over ``[1, cond]``."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (Q * np.linspace(1.0, cond, n)) @ Q.T



class _ReluMargin:
    """Context manager recording the smallest |pre-activation| of any ReLU dense layer."""

    def __enter__(self):
        from dlvkl.autodiff import ops, value

        self._ops, self._orig, self.margin = ops, ops.dense, np.inf

        def dense(x, W, b, relu=False):
            if relu:
                pre = value(x) @ value(W) + value(b)
                self.margin = min(self.margin, float(np.min(np.abs(pre))))
            return self._orig(x, W, b, relu)

        ops.dense = dense
        return self

    def __exit__(self, *exc):
        self._ops.dense = self._orig


def model_fd(cfg, n, seed, eps=1e-4, task_labels=False, margin=1e-3, atol=1e-9, tries=50):
    """Finite-difference check of a model objective near its initial point.

    Parameters are jittered away from initialization; draws whose ReLU
    pre-activations come within ``margin`` of a kink are rejected, since a
    central difference straddling a kink does not estimate the derivative.
    Returns ``(max_excess, max_rel)`` where ``max_excess`` is the largest
    ``|a - n| / (1e-4 max(|a|, |n|) + atol)`` (pass when <= 1) and
    ``max_rel`` the plain relative error with a ``1e-8`` floor.
    """
    from dlvkl.gradengine import finite_diff_check
    from dlvkl.model import ModelState

    r = np.random.default_rng(seed)
    X = r.standard_normal((n, cfg.d_x))
    if cfg.task == "unsupervised":
        Y = X
    elif task_labels:
        Y = r.integers(0, max(cfg.num_classes, 2), (n, 1)).astype(float)
    else:
        Y = r.standard_normal((n, cfg.d_y))
    ms = ModelState.create(cfg, X, rng=np.random.default_rng(seed))
    for _ in range(tries):
        params = ms.params.copy()
        for k in params:
            params[k] = params[k] + 0.1 * r.standard_normal(params[k].shape)
        noise = ms.draw_noise(r, n)
        with _ReluMargin() as probe:
            ms.objective(dict(params), X, Y, noise)
        if probe.margin >= margin:
            break
    else:
        raise RuntimeError("no kink-free evaluation point found")

    def obj(p):
        return ms.objective(p, X, Y, noise)

    _, a, num = finite_diff_check(obj, params, eps, return_details=True)
    scale = np.maximum(np.abs(a), np.abs(num))
    excess = np.abs(a - num) / (1e-4 * scale + atol)
    rel = np.abs(a - num) / np.maximum(scale, 1e-8)
    return float(excess.max()), float(rel.max())
