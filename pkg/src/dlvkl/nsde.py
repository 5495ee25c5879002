"""Neural SDE posterior flow.

The flow evolves latent states with the Euler-Maruyama scheme

    z^{l+1} = z^l + mu(z^l, t^l) dt + sqrt(nu(z^l, t^l) dt) * eps^l,

where ``mu`` is a linear head and ``nu = nu0 * sigmoid(...)`` a bounded
diffusion head on a ReLU trunk that also sees the time ``t^l``. The trunk
is shared over time; each step has its own output heads.

The final-state density is estimated with a Gaussian mixture over the
last transition of ``s`` sampled trajectories.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import Var, ops, value
from .latent import glorot, hidden_width, init_mlp, mlp

LOG_2PI = np.log(2 * np.pi)


@dataclass
class FlowParams:
    """Drift/diffusion networks with flow time ``T`` and ``L`` Euler steps.

    ``params`` maps names written by :meth:`init` to arrays or Vars;
    ``log_nu0`` is the log of the diffusion ceiling ``nu0``.
    """

    params: dict
    T: float = 1.0
    L: int = 10
    n_layers: int = 3
    prefix: str = "flow"
    time_input: bool = True

    @staticmethod
    def init(rng, d_z, L, T=1.0, width=None, n_layers=3, prefix="flow", nu0=None, time_input=True):
        width = hidden_width(d_z) if width is None else width
        d_in = d_z + (1 if time_input else 0)
        p = init_mlp(rng, prefix, [d_in] + [width] * n_layers)
        p[f"{prefix}.Wd"] = np.stack([glorot(rng, width, d_z) for _ in range(L)])
        p[f"{prefix}.bd"] = np.zeros((L, d_z))
        p[f"{prefix}.Ws"] = np.stack([glorot(rng, width, d_z) for _ in range(L)])
        p[f"{prefix}.bs"] = np.zeros((L, d_z))
        p[f"{prefix}.log_nu0"] = np.array([np.log(0.01 / T if nu0 is None else nu0)])
        return p

    @property
    def dt(self):
        return self.T / self.L

    @property
    def log_nu0(self):
        return self.params[f"{self.prefix}.log_nu0"]

    @property
    def nu0(self):
        return float(np.exp(value(self.log_nu0)).reshape(()))

    def __call__(self, Z, t, step):
        return drift_diffusion(self, Z, t, step)


def drift_diffusion(fp, Z, t, step=None):
    """Drift ``Linear(MLP(z, t))`` and diffusion ``nu0 * Sigmoid(Linear(MLP(z, t)))``."""
    if step is None:
        step = min(int(round(t / fp.dt)), fp.L - 1)
    n = value(Z).shape[0]
    h_in = Z
    if fp.time_input:
        h_in = ops.concatenate([Z, np.full((n, 1), float(t))], axis=1)
    h = mlp(fp.params, fp.prefix, h_in, fp.n_layers)
    p, pre = fp.params, fp.prefix
    mu = ops.dense(h, p[f"{pre}.Wd"][step], p[f"{pre}.bd"][step])
    gate = ops.sigmoid(ops.dense(h, p[f"{pre}.Ws"][step], p[f"{pre}.bs"][step]))
    nu = ops.exp(fp.log_nu0) * gate
    return mu, nu


@dataclass
class ConstantDiffusionFlow:
    """Zero drift and constant diffusion ``nu0``: the SDE prior's dynamics."""

    nu0: float
    T: float = 1.0
    L: int = 10

    @property
    def dt(self):
        return self.T / self.L

    def __call__(self, Z, t, step):
        shape = value(Z).shape
        return np.zeros(shape), np.full(shape, float(self.nu0))


def euler_step(z, mu, nu, dt, eps):
    """One Euler-Maruyama update ``z + mu dt + sqrt(nu) sqrt(dt) eps``."""
    return z + mu * dt + ops.sqrt(nu) * (np.sqrt(dt) * eps)


@dataclass
class FlowTrajectory:
    """States ``z^0..z^L`` plus each transition's mean and variance.

    ``step_means[l] = z^l + mu^l dt`` and ``step_vars[l] = nu^l dt`` describe
    ``q(z^{l+1} | z^l)``.
    """

    states: list
    step_means: list
    step_vars: list
    noise: object = None

    @property
    def final(self):
        return self.states[-1]


def sample_flow(flow, Z0, noise):
    """Integrate the flow from ``Z0`` with standard-normal ``noise`` (``L x n x d``).

    Pass ``noise=None`` for the noise-free drift path.
    """
    L, dt = flow.L, flow.dt
    states, means, variances = [Z0], [], []
    z = Z0
    for l in range(L):
        mu, nu = flow(z, l * dt, l)
        mean = z + mu * dt
        var = nu * dt
        means.append(mean)
        variances.append(var)
        if noise is None:
            z = mean
        else:
            z = mean + ops.sqrt(var) * noise[l]
        states.append(z)
    return FlowTrajectory(states, means, variances, noise)


def gaussian_logpdf_diag(z, mean, var):
    """Row-wise log density of diagonal Gaussians (sums the last axis)."""
    return -0.5 * ops.sum(LOG_2PI + ops.log(var) + ops.square(z - mean) / var, axis=-1)


def sde_prior_logpdf(zL, prior_mean, nu0T):
    """``log N(zL | prior_mean, nu0 T I)`` per row (or for a single vector)."""
    return gaussian_logpdf_diag(zL, prior_mean, nu0T)


def mixture_logpdf(zq, means, variances, chunk=512):
    """Log density of ``s``-component diagonal Gaussian mixtures.

    ``means`` and ``variances`` are ``s x n x d`` (component, point, dim);
    ``zq`` is ``q x n x d``. Returns ``q x n``. Plain-array inputs are
    processed in chunks of queries to bound memory.
    """
    s = value(means).shape[0]
    if any(isinstance(a, Var) for a in (zq, means, variances)):
        zq4 = ops.reshape(zq, (value(zq).shape[0], 1) + value(zq).shape[1:])
        comp = gaussian_logpdf_diag(zq4, ops.reshape(means, (1,) + value(means).shape),
                                    ops.reshape(variances, (1,) + value(variances).shape))
        return ops.logsumexp(comp, axis=1) - np.log(s)
    zq, means, variances = (np.asarray(a, dtype=float) for a in (zq, means, variances))
    # expand the quadratic form so each point is a batched matrix product:
    # (z - m)^2 / v = z^2 / v - 2 z m / v + m^2 / v, summed over dims
    inv_var = np.transpose(1.0 / variances, (1, 2, 0))  # n x d x s
    scaled = np.transpose(means / variances, (1, 2, 0))
    const = -0.5 * np.sum(LOG_2PI + np.log(variances) + means**2 / variances, axis=-1).T  # n x s
    out = np.empty(zq.shape[:2])
    for lo in range(0, zq.shape[0], chunk):
        block = np.transpose(zq[lo : lo + chunk], (1, 0, 2))  # n x c x d
        comp = const[:, None, :] - 0.5 * (block**2 @ inv_var) + block @ scaled
        m = comp.max(axis=2, keepdims=True)
        lse = m[..., 0] + np.log(np.exp(comp - m).sum(axis=2))
        out[lo : lo + chunk] = lse.T - np.log(s)
    return out


def _reshape_samples(a, s):
    v = value(a)
    return ops.reshape(a, (s, v.shape[0] // s) + v.shape[1:])


def posterior_logpdf_estimate(traj, zL_query, s):
    """Estimate ``log q(z^L | x)`` from the last transition of ``s`` trajectories.

    ``traj`` was sampled from ``s`` stacked copies of the same ``n`` inputs
    (rows ordered sample-major). ``zL_query`` is ``q x n x d`` or ``n x d``;
    returns ``q x n`` (or ``n``).
    """
    means = _reshape_samples(traj.step_means[-1], s)
    variances = _reshape_samples(traj.step_vars[-1], s)
    single = value(zL_query).ndim == 2
    zq = ops.reshape(zL_query, (1,) + value(zL_query).shape) if single else zL_query
    out = mixture_logpdf(zq, means, variances)
    return out[0] if single else out


def kl_z_terms(traj, s, prior_mean, prior_var):
    """Per-point MC estimate of ``KL[q(z^L|x) || N(prior_mean, prior_var)]``.

    Each of the ``s`` final states is scored under the ``s``-component
    mixture and under the Gaussian prior; the log ratios are averaged over
    samples. Returns a length-``n`` array.
    """
    zL = _reshape_samples(traj.final, s)
    log_q = posterior_logpdf_estimate(traj, zL, s)
    log_p = gaussian_logpdf_diag(zL, prior_mean, prior_var)
    return ops.mean(log_q - log_p, axis=0)


def kl_z_estimate(traj, s, prior_mean, prior_var, beta=1.0):
    """``beta`` times the batch-averaged MC KL; exactly zero when ``beta == 0``."""
    if beta == 0:
        return 0.0
    return beta * ops.mean(kl_z_terms(traj, s, prior_mean, prior_var))
