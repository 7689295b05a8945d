"""EKF and UKF moment propagation.

These supply the predicted covariance the flow equations consume and the
covariance track the flow-based filters maintain alongside the particles.
All updates use the Joseph form so posterior covariances stay symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve

from .models import DynamicModel, GaussianBelief, MeasurementModel
from .numerics import cholesky_with_jitter

__all__ = ["UkfParams", "ekf_predict", "ekf_update", "ukf_predict", "ukf_update"]


@dataclass(frozen=True)
class UkfParams:
    """Sigma-point scaling; kappa=None resolves to the 3 - n heuristic."""

    alpha: float = 1.0
    beta: float = 2.0
    kappa: Optional[float] = None

    def resolve_kappa(self, n: int) -> float:
        return 3.0 - n if self.kappa is None else self.kappa


def ekf_predict(b: GaussianBelief, dm: DynamicModel) -> GaussianBelief:
    """(mean, cov) -> (g(mean, 0), G cov G^T + Q) with G the transition Jacobian."""
    mean = dm.propagate(b.mean, None, False)
    G = dm.jacobian_at(b.mean)
    cov = G @ b.cov @ G.T + dm.process_cov()
    return GaussianBelief(mean, 0.5 * (cov + cov.T))


def ekf_update(b: GaussianBelief, z: np.ndarray, mm: MeasurementModel) -> GaussianBelief:
    """Standard EKF measurement update, Joseph-form covariance."""
    z = np.asarray(z, dtype=float)
    H = mm.jacobian_at(b.mean)
    R = mm.noise_cov_at(b.mean)
    innovation = z - mm.measure(b.mean, None, False)
    S = H @ b.cov @ H.T + R
    L, _ = cholesky_with_jitter(S)
    K = cho_solve((L, True), H @ b.cov).T
    mean = b.mean + K @ innovation
    IKH = np.eye(b.dim) - K @ H
    cov = IKH @ b.cov @ IKH.T + K @ R @ K.T
    return GaussianBelief(mean, 0.5 * (cov + cov.T))


def _sigma_points(b: GaussianBelief, p: UkfParams):
    n = b.dim
    kappa = p.resolve_kappa(n)
    lam = p.alpha ** 2 * (n + kappa) - n
    L, _ = cholesky_with_jitter((n + lam) * b.cov)
    points = np.empty((2 * n + 1, n))
    points[0] = b.mean
    points[1:n + 1] = b.mean + L.T
    points[n + 1:] = b.mean - L.T
    wm = np.full(2 * n + 1, 0.5 / (n + lam))
    wc = wm.copy()
    wm[0] = lam / (n + lam)
    wc[0] = wm[0] + 1.0 - p.alpha ** 2 + p.beta
    return points, wm, wc


def ukf_predict(b: GaussianBelief, dm: DynamicModel,
                p: UkfParams = UkfParams()) -> GaussianBelief:
    points, wm, wc = _sigma_points(b, p)
    prop = np.stack([dm.propagate(x, None, False) for x in points])
    mean = wm @ prop
    centered = prop - mean
    cov = (centered * wc[:, None]).T @ centered + dm.process_cov()
    return GaussianBelief(mean, 0.5 * (cov + cov.T))


def ukf_update(b: GaussianBelief, z: np.ndarray, mm: MeasurementModel,
               p: UkfParams = UkfParams()) -> GaussianBelief:
    z = np.asarray(z, dtype=float)
    points, wm, wc = _sigma_points(b, p)
    obs = np.stack([mm.measure(x, None, False) for x in points])
    z_pred = wm @ obs
    obs_centered = obs - z_pred
    state_centered = points - b.mean
    S = (obs_centered * wc[:, None]).T @ obs_centered + mm.noise_cov_at(b.mean)
    C = (state_centered * wc[:, None]).T @ obs_centered
    L, _ = cholesky_with_jitter(S)
    K = cho_solve((L, True), C.T).T
    mean = b.mean + K @ (z - z_pred)
    cov = b.cov - K @ S @ K.T
    return GaussianBelief(mean, 0.5 * (cov + cov.T))
