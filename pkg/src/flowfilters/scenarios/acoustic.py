"""Multi-target acoustic amplitude tracking.

Four targets move with near-constant velocity in a 40 m x 40 m region;
a 5 x 5 sensor grid records the superposed sound amplitude (decaying
with distance) of all targets under additive Gaussian noise.  Truth is
simulated with a small process noise covariance while the filters assume
a deliberately inflated one, so the model mismatch of the original
benchmark is preserved exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import block_diag

from ..models import DynamicModel, GaussianBelief, MeasurementModel, ScenarioModel
from ..numerics import mvn_logpdf_batch

__all__ = ["AcousticConfig", "AcousticDynamics", "AcousticMeasurement", "make_scenario"]

# per-target constant-velocity transition over one time unit
F_BLOCK = np.array([
    [1.0, 0.0, 1.0, 0.0],
    [0.0, 1.0, 0.0, 1.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
])

# truth process noise per target
V_BLOCK = np.array([
    [1.0 / 3.0, 0.0, 0.5, 0.0],
    [0.0, 1.0 / 3.0, 0.0, 0.5],
    [0.5, 0.0, 1.0, 0.0],
    [0.0, 0.5, 0.0, 1.0],
]) / 20.0

# inflated per-target process noise assumed by the filters
Q_BLOCK = np.array([
    [3.0, 0.0, 0.1, 0.0],
    [0.0, 3.0, 0.0, 0.1],
    [0.1, 0.0, 0.03, 0.0],
    [0.0, 0.1, 0.0, 0.03],
])

TRUE_INITIAL_STATES = np.array([
    [12.0, 6.0, 0.001, 0.001],
    [32.0, 32.0, -0.001, -0.005],
    [20.0, 13.0, -0.1, 0.01],
    [15.0, 35.0, 0.002, 0.002],
]).reshape(-1)


def _default_sensor_grid() -> np.ndarray:
    # symmetric 5x5 coverage of the 40 m x 40 m region
    ticks = np.array([4.0, 12.0, 20.0, 28.0, 36.0])
    gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


@dataclass(frozen=True)
class AcousticConfig:
    n_targets: int = 4
    region: float = 40.0
    amplitude: float = 10.0
    offset: float = 0.1
    noise_var: float = 0.01
    sensor_positions: np.ndarray = field(default_factory=_default_sensor_grid)
    true_init: np.ndarray = field(default_factory=lambda: TRUE_INITIAL_STATES.copy())
    prior_pos_std: float = 10.0
    prior_vel_std: float = 1.0

    @property
    def state_dim(self) -> int:
        return 4 * self.n_targets

    @property
    def n_sensors(self) -> int:
        return self.sensor_positions.shape[0]


class AcousticDynamics(DynamicModel):
    """Block-diagonal constant-velocity dynamics for all targets jointly."""

    has_transition_density = True

    def __init__(self, cfg: AcousticConfig, noise_block: np.ndarray):
        self.cfg = cfg
        self.state_dim = cfg.state_dim
        self._noise_block = np.asarray(noise_block, dtype=float)
        self._noise_chol = np.linalg.cholesky(self._noise_block)
        self._F = block_diag(*([F_BLOCK] * cfg.n_targets))
        self._cov = block_diag(*([self._noise_block] * cfg.n_targets))

    def propagate(self, x, rng, with_noise):
        per_target = np.asarray(x, dtype=float).reshape(-1, 4)
        out = per_target @ F_BLOCK.T
        if with_noise:
            out = out + rng.standard_normal(per_target.shape) @ self._noise_chol.T
        return out.reshape(-1)

    def jacobian_at(self, x):
        return self._F

    def process_cov(self):
        return self._cov

    def log_transition_density(self, x_t, x_prev):
        mean = self.propagate(x_prev, None, False)
        return float(mvn_logpdf_batch(np.asarray(x_t)[None, :], mean, self._cov)[0])


class AcousticMeasurement(MeasurementModel):
    """Superposed amplitude at every sensor with constant Gaussian noise."""

    def __init__(self, cfg: AcousticConfig):
        self.cfg = cfg
        self.obs_dim = cfg.n_sensors
        self._R = cfg.noise_var * np.eye(self.obs_dim)

    def _distances(self, xs: np.ndarray) -> np.ndarray:
        # (n, targets, sensors) Euclidean distances
        pos = xs.reshape(xs.shape[0], -1, 4)[:, :, :2]
        diff = pos[:, :, None, :] - self.cfg.sensor_positions[None, None, :, :]
        return np.sqrt(np.sum(diff ** 2, axis=-1))

    def measure(self, x, rng, with_noise):
        z = self.measure_batch(np.asarray(x, dtype=float)[None, :])[0]
        if with_noise:
            z = z + np.sqrt(self.cfg.noise_var) * rng.standard_normal(self.obs_dim)
        return z

    def measure_batch(self, xs):
        xs = np.asarray(xs, dtype=float)
        dist = self._distances(xs)
        return np.sum(self.cfg.amplitude / (dist + self.cfg.offset), axis=1)

    def jacobian_at(self, x):
        return self.jacobian_batch(np.asarray(x, dtype=float)[None, :])[0]

    def jacobian_batch(self, xs):
        xs = np.asarray(xs, dtype=float)
        n = xs.shape[0]
        n_targets = self.cfg.n_targets
        pos = xs.reshape(n, n_targets, 4)[:, :, :2]
        diff = pos[:, :, None, :] - self.cfg.sensor_positions[None, None, :, :]
        dist = np.sqrt(np.sum(diff ** 2, axis=-1))
        dist = np.maximum(dist, 1e-12)
        # d z_s / d pos_m = -amplitude * (pos - r_s) / (dist * (dist + offset)^2)
        grad = -self.cfg.amplitude * diff / (
            dist * (dist + self.cfg.offset) ** 2)[..., None]
        jac = np.zeros((n, self.obs_dim, 4 * n_targets))
        for m in range(n_targets):
            jac[:, :, 4 * m] = grad[:, m, :, 0]
            jac[:, :, 4 * m + 1] = grad[:, m, :, 1]
        return jac

    def noise_cov_at(self, x):
        return self._R

    def noise_cov_batch(self, xs):
        return np.broadcast_to(self._R, (xs.shape[0],) + self._R.shape)

    def log_likelihood(self, z, x):
        resid = np.asarray(z, dtype=float) - self.measure(x, None, False)
        return float(-0.5 * (self.obs_dim * np.log(2.0 * np.pi * self.cfg.noise_var)
                             + resid @ resid / self.cfg.noise_var))


def make_scenario(cfg: Optional[AcousticConfig] = None) -> ScenarioModel:
    """Scenario with truth dynamics under V and filter dynamics under Q."""
    cfg = cfg or AcousticConfig()
    prior_std = np.tile([cfg.prior_pos_std, cfg.prior_pos_std,
                         cfg.prior_vel_std, cfg.prior_vel_std], cfg.n_targets)
    prior = GaussianBelief(cfg.true_init.copy(), np.diag(prior_std ** 2))
    # targets move inside the surveilled region; velocities are unconstrained
    bounds = np.tile([[0.0, cfg.region], [0.0, cfg.region],
                      [-np.inf, np.inf], [-np.inf, np.inf]], (cfg.n_targets, 1))
    return ScenarioModel(
        name="acoustic",
        dynamic=AcousticDynamics(cfg, Q_BLOCK),
        measurement=AcousticMeasurement(cfg),
        truth_dynamic=AcousticDynamics(cfg, V_BLOCK),
        truth_init=cfg.true_init.copy(),
        prior=prior,
        prior_mean_std=prior_std,
        state_bounds=bounds,
    )
