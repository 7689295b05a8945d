"""Dense small-matrix kernels and special functions shared by the filters.

Everything here is pure and reentrant.  Densities are computed in log
space throughout; covariance factorizations go through a jitter ladder
so that rank-deficient ensemble covariances (common when the particle
count barely exceeds the state dimension) stay usable.
"""

from __future__ import annotations

import math
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import kve

from .errors import DomainError, EmptyParticleSet, NotPositiveDefinite, ShapeMismatch
from .models import GaussianBelief, ParticleSet

__all__ = [
    "cholesky_with_jitter",
    "log_gaussian_density",
    "mvn_logpdf_batch",
    "log_bessel_k",
    "weighted_mean_cov",
]

_LOG_2PI = math.log(2.0 * math.pi)

#: relative symmetry tolerance required of covariance inputs
_SYMMETRY_RTOL = 1e-10


def cholesky_with_jitter(m: np.ndarray, base_jitter: Optional[float] = None
                         ) -> Tuple[np.ndarray, float]:
    """Lower-triangular L with L @ L.T = m + j*I for the smallest workable j.

    The ladder tries j = 0 first, then base_jitter * 10**k for k = 0..8.
    base_jitter defaults to 1e-9 * trace(m)/dim (1e-9 absolute for a zero
    trace).  Returns (L, j); raises NotPositiveDefinite when the ladder is
    exhausted.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got shape {m.shape}")
    if m.size:
        scale = max(1.0, float(np.abs(m).max()))
        if float(np.abs(m - m.T).max()) > _SYMMETRY_RTOL * scale:
            raise ShapeMismatch("matrix is not symmetric within tolerance")
    sym = 0.5 * (m + m.T)
    if base_jitter is None:
        avg_diag = float(np.trace(sym)) / max(1, sym.shape[0])
        base_jitter = 1e-9 * avg_diag if avg_diag > 0.0 else 1e-9
    eye = np.eye(sym.shape[0])
    for jitter in [0.0] + [base_jitter * 10.0 ** k for k in range(9)]:
        try:
            return np.linalg.cholesky(sym + jitter * eye), jitter
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveDefinite(
        f"cholesky failed after jitter ladder up to {base_jitter * 1e8:.3g}")


def log_gaussian_density(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """log N(x; mean, cov) via a jittered Cholesky factorization."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if x.shape != mean.shape or cov.shape != (x.size, x.size):
        raise ShapeMismatch("x, mean and cov dimensions disagree")
    L, _ = cholesky_with_jitter(cov)
    u = solve_triangular(L, x - mean, lower=True)
    half_logdet = float(np.sum(np.log(np.diag(L))))
    return -0.5 * (x.size * _LOG_2PI + float(u @ u)) - half_logdet


def mvn_logpdf_batch(xs: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """log N(x; mean, cov) for each row of xs, factorizing cov once."""
    xs = np.asarray(xs, dtype=float)
    mean = np.asarray(mean, dtype=float)
    L, _ = cholesky_with_jitter(cov)
    u = solve_triangular(L, (xs - mean).T, lower=True)
    half_logdet = float(np.sum(np.log(np.diag(L))))
    return -0.5 * (mean.size * _LOG_2PI + np.sum(u * u, axis=0)) - half_logdet


def log_bessel_k(order: float, arg: float) -> float:
    """log K_order(arg) for the modified Bessel function of the second kind.

    Uses the exponentially scaled scipy kernel where it stays finite and
    falls back to arbitrary precision for the huge-value corner (large
    order with small argument).  K_{-v} = K_v, so the order enters by
    absolute value.
    """
    if not arg > 0.0:
        raise DomainError(f"log_bessel_k requires arg > 0, got {arg}")
    order = abs(float(order))
    scaled = kve(order, arg)
    if np.isfinite(scaled) and scaled > 0.0:
        return float(np.log(scaled) - arg)
    import mpmath

    with mpmath.workdps(30):
        return float(mpmath.log(mpmath.besselk(order, arg)))


def weighted_mean_cov(particles: ParticleSet) -> GaussianBelief:
    """Weighted ensemble mean and covariance, symmetrized.

    Uniform weights give the plain sample moments with divisor n (not
    n - 1), matching the predictive-moment estimators the filters use.
    """
    if particles.n == 0:
        raise EmptyParticleSet("cannot take moments of an empty particle set")
    w = particles.normalized_weights()
    mean = w @ particles.states
    centered = particles.states - mean
    cov = (centered * w[:, None]).T @ centered
    return GaussianBelief(mean, 0.5 * (cov + cov.T))
