"""Dense linear-algebra primitives: jittered Cholesky, triangular solves, log-determinants."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, FactorizationFailure

JITTER_FACTOR = 1e-6
MAX_ATTEMPTS = 6


@dataclass(frozen=True)
class CholFactor:
    """Lower Cholesky factor of ``A + jitter_used * I``."""

    lower: np.ndarray
    jitter_used: float = 0.0

    @property
    def n(self):
        return self.lower.shape[0]


def cholesky_jitter(A, base_jitter=None):
    """Factor a symmetric matrix, adding diagonal jitter on failure.

    Attempts ``base_jitter * 10**k`` for ``k = 0..5``. When ``base_jitter``
    is None it defaults to ``1e-6`` times the mean diagonal of ``A``. A
    zero base tries the bare matrix first and then escalates from
    ``1e-9`` times the mean absolute diagonal.

    Raises
    ------
    FactorizationFailure
        If no attempt yields a positive-definite matrix.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise FactorizationFailure("matrix has non-finite entries")
    scale = float(np.mean(np.abs(np.diag(A)))) if A.shape[0] else 1.0
    scale = scale if scale > 0 else 1.0
    if base_jitter is None:
        base_jitter = JITTER_FACTOR * scale
    jitters = [base_jitter * 10.0**k for k in range(MAX_ATTEMPTS)]
    if base_jitter == 0:
        jitters = [0.0] + [1e-9 * scale * 10.0**k for k in range(MAX_ATTEMPTS - 1)]
    eye = np.eye(A.shape[0])
    for jitter in jitters:
        try:
            lower = np.linalg.cholesky(A + jitter * eye)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.diag(lower) > 0):
            return CholFactor(lower, float(jitter))
    raise FactorizationFailure(
        f"Cholesky failed with jitter up to {jitters[-1]:.3g}; "
        "kernel matrix is ill-conditioned or parameters are invalid"
    )


def _lower(L):
    return L.lower if isinstance(L, CholFactor) else np.asarray(L, dtype=float)


def tri_solve(L, B, transposed=False):
    """Solve ``L X = B`` (or ``L^T X = B`` when ``transposed``)."""
    lower = _lower(L)
    B = np.asarray(B, dtype=float)
    if lower.ndim != 2 or lower.shape[0] != lower.shape[1]:
        raise DimensionMismatch(f"factor must be square, got {lower.shape}")
    if B.shape[0] != lower.shape[0]:
        raise DimensionMismatch(
            f"right-hand side has {B.shape[0]} rows, factor has {lower.shape[0]}"
        )
    return solve_triangular(lower, B, lower=True, trans=1 if transposed else 0)


def chol_solve(L, B):
    """Solve ``(L L^T) X = B`` with two triangular solves."""
    return tri_solve(L, tri_solve(L, B), transposed=True)


def logdet_chol(L):
    """Log-determinant of the factored matrix, ``2 * sum(log(diag(L)))``."""
    return 2.0 * float(np.sum(np.log(np.diag(_lower(L)))))


def gaussian_logpdf_chol(y, L):
    """Log density of ``y`` under ``N(0, L L^T)`` for a single vector ``y``."""
    y = np.asarray(y, dtype=float)
    alpha = tri_solve(L, y)
    n = y.shape[0]
    return -0.5 * (n * np.log(2 * np.pi) + logdet_chol(L) + float(alpha @ alpha))
