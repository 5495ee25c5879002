"""Sparse variational GP layer.

Inducing variables ``u_d ~ q(u_d) = N(m_d, S_d)`` sit at latent positions
``Z~`` (one shared kernel across outputs). ``S_d = L_d L_d^T`` where each
``L_d`` is stored as strictly-lower entries plus a log diagonal.

The whitened variants parameterize ``u_d = L_m v_d`` with
``q(v_d) = N(m_d, S_d)`` and ``p(v_d) = N(0, I)``, where ``L_m`` is the
Cholesky factor of ``K_mm``; ``m_d = 0, S_d = I`` is then the prior.
"""

from dataclasses import dataclass

import numpy as np
from scipy.cluster.vq import kmeans2

from . import numerics
from .autodiff import ops, value
from .kernel import KernelParams, kdiag, kmat

VARIANCE_FLOOR = 1e-12


@dataclass
class SparseGPState:
    """Inducing inputs (original input space), ``q(u)`` moments and kernel.

    ``q_means`` is ``m x d_y``; ``q_chols`` is indexable by output and yields
    ``m x m`` lower-triangular factors.
    """

    inducing_inputs_raw: object
    q_means: object
    q_chols: object
    kernel: KernelParams

    @property
    def num_inducing(self):
        return value(self.q_means).shape[0]

    @property
    def num_outputs(self):
        return value(self.q_means).shape[1]


def tril_indices(m):
    return np.tril_indices(m, -1)


def build_q_chols(offdiag, logdiag):
    """Assemble lower-triangular factors from packed parameters.

    ``offdiag`` is ``d_y x m(m-1)/2`` (row-major strictly-lower entries) and
    ``logdiag`` is ``d_y x m``.
    """
    d_y, m = value(logdiag).shape
    rows, cols = tril_indices(m)
    diag = (np.arange(m), np.arange(m))
    chols = []
    for d in range(d_y):
        L = ops.scatter(ops.exp(logdiag[d]), (m, m), diag)
        if rows.size:
            L = L + ops.scatter(offdiag[d], (m, m), (rows, cols))
        chols.append(L)
    return chols


def pack_q_chol(L):
    """Inverse of :func:`build_q_chols` for a single factor."""
    L = np.asarray(L, dtype=float)
    rows, cols = tril_indices(L.shape[0])
    return L[rows, cols], np.log(np.diag(L))


def kmm_factor(kernel, Ztilde):
    """Jittered Cholesky factor of ``K_mm``."""
    return ops.cholesky(kmat(kernel, Ztilde))


def qf_moments(state, Z, Ztilde, Lm=None):
    """Marginal moments of ``q(f_i | z_i)`` for each point and output.

    ``mu_d = K_nm K_mm^-1 m_d`` and
    ``var_d = k_ii - diag(K_nm K_mm^-1 [I - S_d K_mm^-1] K_mn)``,
    with variances clamped at ``1e-12``. Returns two ``n x d_y`` arrays.
    """
    if Lm is None:
        Lm = kmm_factor(state.kernel, Ztilde)
    Kmn = kmat(state.kernel, Ztilde, Z)
    A = ops.solve_tri(Lm, Kmn)
    W = ops.solve_tri(Lm, A, transposed=True)  # K_mm^-1 K_mn
    mu = ops.matmul(ops.transpose(W), state.q_means)
    base = kdiag(state.kernel, Z) - ops.sum(ops.square(A), axis=0)
    cols = []
    for d in range(state.num_outputs):
        B = ops.matmul(ops.transpose(state.q_chols[d]), W)
        cols.append(base + ops.sum(ops.square(B), axis=0))
    var = ops.stack(cols, axis=1)
    return mu, ops.clamp_min(var, VARIANCE_FLOOR)


def kl_u(state, Ztilde=None, Lm=None):
    """``sum_d KL[N(m_d, S_d) || N(0, K_mm)]`` in closed form."""
    if Lm is None:
        Ztilde = state.inducing_inputs_raw if Ztilde is None else Ztilde
        Lm = kmm_factor(state.kernel, Ztilde)
    m = state.num_inducing
    logdet_k = 2.0 * ops.sum(ops.log(ops.diagonal(Lm)))
    alpha = ops.solve_tri(Lm, state.q_means)
    total = 0.0
    for d in range(state.num_outputs):
        Ld = state.q_chols[d]
        trace = ops.sum(ops.square(ops.solve_tri(Lm, Ld)))
        maha = ops.sum(ops.square(alpha[:, d]))
        logdet_s = 2.0 * ops.sum(ops.log(ops.diagonal(Ld) * np.sign(np.diag(value(Ld)))))
        total = total + 0.5 * (trace + maha - m + logdet_k - logdet_s)
    return total


def qf_moments_whitened(kernel, q_means, q_chols, Z, Ztilde, Lm=None):
    """:func:`qf_moments` for a whitened ``q(v)``.

    With ``A = L_m^-1 K_mn``: ``mu = A^T m_d`` and
    ``var = k_ii - |A_i|^2 + |L_d^T A_i|^2``.
    """
    if Lm is None:
        Lm = kmm_factor(kernel, Ztilde)
    A = ops.solve_tri(Lm, kmat(kernel, Ztilde, Z))
    mu = ops.matmul(ops.transpose(A), q_means)
    base = kdiag(kernel, Z) - ops.sum(ops.square(A), axis=0)
    cols = []
    for d in range(len(q_chols)):
        B = ops.matmul(ops.transpose(q_chols[d]), A)
        cols.append(base + ops.sum(ops.square(B), axis=0))
    return mu, ops.clamp_min(ops.stack(cols, axis=1), VARIANCE_FLOOR)


def kl_u_whitened(q_means, q_chols):
    """``sum_d KL[N(m_d, S_d) || N(0, I)]``."""
    m = value(q_means).shape[0]
    total = 0.5 * ops.sum(ops.square(q_means))
    for Ld in q_chols:
        logdet_s = 2.0 * ops.sum(ops.log(ops.diagonal(Ld) * np.sign(np.diag(value(Ld)))))
        total = total + 0.5 * (ops.sum(ops.square(Ld)) - m - logdet_s)
    return total


def unwhiten(Lm, q_means, q_chols):
    """Map whitened ``(m_d, L_d)`` to the moments of ``q(u)``: ``(L_m m_d, L_m L_d)``."""
    return ops.matmul(Lm, q_means), [ops.matmul(Lm, Ld) for Ld in q_chols]


def exact_log_marginal(kernel, noise_variances, X, Y):
    """``sum_d log N(y_d | 0, K_nn + nu_d I)`` for a Gaussian likelihood."""
    X = np.asarray(value(X), dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(X.shape[0], -1)
    noise_variances = np.broadcast_to(np.asarray(noise_variances, dtype=float), (Y.shape[1],))
    K = np.asarray(value(kmat(_plain(kernel), X)))
    total = 0.0
    for d in range(Y.shape[1]):
        fac = numerics.cholesky_jitter(K + noise_variances[d] * np.eye(X.shape[0]), 0.0)
        total += numerics.gaussian_logpdf_chol(Y[:, d], fac)
    return total


def optimal_qu(kernel, noise_variance, Ztilde, Z, y):
    """Closed-form optimal ``q(u)`` for a Gaussian likelihood.

    ``S = K_mm (K_mm + K_mn K_nm / nu)^-1 K_mm`` and ``m = S K_mm^-1 K_mn y / nu``.
    """
    kernel = _plain(kernel)
    Kmm = np.asarray(kmat(kernel, Ztilde))
    Kmn = np.asarray(kmat(kernel, Ztilde, Z))
    Sigma = Kmm + Kmn @ Kmn.T / noise_variance
    fac = numerics.cholesky_jitter(Sigma)
    S = Kmm @ numerics.chol_solve(fac, Kmm)
    mean = Kmm @ numerics.chol_solve(fac, Kmn @ y) / noise_variance
    return mean, 0.5 * (S + S.T)


def _plain(kernel):
    return KernelParams(np.asarray(value(kernel.log_lengthscales)), np.asarray(value(kernel.log_signal_variance)))


def init_inducing(X, m, rng, iters=10):
    """Inducing positions by seeded k-means (``iters`` Lloyd iterations)."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if m >= n:
        extra = X[rng.integers(0, n, size=m - n)] + 1e-3 * rng.standard_normal((m - n, X.shape[1]))
        return np.concatenate([X, extra], axis=0)
    seed = int(rng.integers(0, 2**31 - 1))
    centroids, _ = kmeans2(X, m, iter=iters, minit="++", seed=seed)
    return centroids
