"""Model contracts consumed by the filters, plus the core state containers.

A scenario supplies a dynamic model (state transition) and a measurement
model; filters only ever talk to these interfaces.  Model instances are
immutable after construction and receive their random generator per call,
so they are safe to share across concurrent campaigns.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import AllWeightsDegenerate, MissingCapability, ShapeMismatch

__all__ = [
    "DynamicModel",
    "MeasurementModel",
    "GaussianBelief",
    "ParticleSet",
    "ScenarioModel",
    "normalize_log_weights",
]


@dataclass(frozen=True)
class GaussianBelief:
    """A Gaussian N(mean, cov) used for posteriors, predictions and priors."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if mean.ndim != 1:
            raise ShapeMismatch(f"mean must be a vector, got shape {mean.shape}")
        if cov.shape != (mean.size, mean.size):
            raise ShapeMismatch(f"cov shape {cov.shape} does not match mean size {mean.size}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass
class ParticleSet:
    """N state vectors with optional log-weights (None means uniform)."""

    states: np.ndarray
    log_weights: Optional[np.ndarray] = None

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        if states.ndim != 2:
            raise ShapeMismatch(f"states must be (n, dim), got shape {states.shape}")
        self.states = states
        if self.log_weights is not None:
            lw = np.asarray(self.log_weights, dtype=float)
            if lw.shape != (states.shape[0],):
                raise ShapeMismatch(f"log_weights shape {lw.shape} does not match n={states.shape[0]}")
            self.log_weights = lw

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def normalized_weights(self) -> np.ndarray:
        if self.log_weights is None:
            return np.full(self.n, 1.0 / self.n)
        return normalize_log_weights(self.log_weights)


def normalize_log_weights(lw) -> np.ndarray:
    """Turn unnormalized log-weights into weights summing to one.

    Max-shifted exponentiation makes the result invariant to adding any
    constant to all entries; raises AllWeightsDegenerate when no entry
    is finite.
    """
    lw = np.asarray(lw, dtype=float)
    if lw.size == 0:
        raise AllWeightsDegenerate("empty weight vector")
    finite = np.isfinite(lw)
    if not finite.any():
        raise AllWeightsDegenerate("all log-weights are -inf or NaN")
    shifted = lw - lw[finite].max()
    w = np.where(np.isnan(shifted), -np.inf, shifted)
    w = np.exp(w)
    return w / w.sum()


class DynamicModel(abc.ABC):
    """State transition contract: x_t = g(x_{t-1}, v_t)."""

    state_dim: int

    #: whether log_transition_density is implemented (PFPF needs it)
    has_transition_density: bool = False

    @abc.abstractmethod
    def propagate(self, x: np.ndarray, rng: Optional[np.random.Generator],
                  with_noise: bool) -> np.ndarray:
        """Apply the transition; with_noise=False must be deterministic."""

    @abc.abstractmethod
    def jacobian_at(self, x: np.ndarray) -> np.ndarray:
        """d(propagate)/dx at x for the noiseless transition."""

    @abc.abstractmethod
    def process_cov(self) -> np.ndarray:
        """Process noise covariance the filters assume."""

    def log_transition_density(self, x_t: np.ndarray, x_prev: np.ndarray) -> float:
        raise MissingCapability(f"{type(self).__name__} provides no transition density")


class MeasurementModel(abc.ABC):
    """Observation contract: z_t = h(x_t, w_t)."""

    obs_dim: int

    @abc.abstractmethod
    def measure(self, x: np.ndarray, rng: Optional[np.random.Generator],
                with_noise: bool) -> np.ndarray:
        """Apply the observation map; with_noise=False must be deterministic."""

    @abc.abstractmethod
    def jacobian_at(self, x: np.ndarray) -> np.ndarray:
        """dh/dx at x, shape (obs_dim, state_dim)."""

    @abc.abstractmethod
    def noise_cov_at(self, x: np.ndarray) -> np.ndarray:
        """Observation noise covariance; may depend on x."""

    @abc.abstractmethod
    def log_likelihood(self, z: np.ndarray, x: np.ndarray) -> float:
        """log p(z | x)."""

    def jacobian_batch(self, xs: np.ndarray) -> np.ndarray:
        """Stacked Jacobians for (n, state_dim) inputs; models may override
        with a vectorized version."""
        return np.stack([self.jacobian_at(x) for x in xs])

    def measure_batch(self, xs: np.ndarray) -> np.ndarray:
        """Stacked noiseless measurements for (n, state_dim) inputs."""
        return np.stack([self.measure(x, None, False) for x in xs])

    def noise_cov_batch(self, xs: np.ndarray) -> np.ndarray:
        """Stacked noise covariances for (n, state_dim) inputs."""
        return np.stack([self.noise_cov_at(x) for x in xs])


@dataclass(frozen=True)
class ScenarioModel:
    """A benchmark scenario: filter-side models, truth simulator and prior.

    The filter-side dynamic model and the truth dynamics may deliberately
    disagree (model mismatch); they are kept as separate instances and are
    never conflated.
    """

    name: str
    dynamic: DynamicModel
    measurement: MeasurementModel
    truth_dynamic: DynamicModel
    truth_init: np.ndarray
    prior: GaussianBelief
    #: per-component std of the prior-mean perturbation drawn for each rerun;
    #: None keeps the prior mean fixed.
    prior_mean_std: Optional[np.ndarray] = field(default=None)
    #: (dim, 2) lower/upper bounds the state must respect (use +-inf where
    #: unconstrained); None disables bounding.  Applies to truth trajectories
    #: and to perturbed prior means, both drawn by rejection.
    state_bounds: Optional[np.ndarray] = field(default=None)

    _MAX_REJECTION_TRIES = 1000

    @property
    def state_dim(self) -> int:
        return self.dynamic.state_dim

    @property
    def obs_dim(self) -> int:
        return self.measurement.obs_dim

    def _in_bounds(self, x: np.ndarray) -> bool:
        if self.state_bounds is None:
            return True
        return bool(np.all(x >= self.state_bounds[:, 0])
                    and np.all(x <= self.state_bounds[:, 1]))

    def sample_prior(self, rng: np.random.Generator) -> GaussianBelief:
        """Prior for one run; perturbs the mean when the scenario asks for it.

        Perturbed means are redrawn until they respect the state bounds.
        """
        if self.prior_mean_std is None:
            return self.prior
        for _ in range(self._MAX_REJECTION_TRIES):
            mean = self.prior.mean + self.prior_mean_std * rng.standard_normal(self.state_dim)
            if self._in_bounds(mean):
                return GaussianBelief(mean, self.prior.cov)
        raise RuntimeError("could not draw an in-bounds prior mean")

    def simulate_truth(self, horizon: int, rng: np.random.Generator
                       ) -> Tuple[np.ndarray, np.ndarray]:
        """Ground truth from the TRUE dynamics plus one noisy measurement per step.

        Returns (states, measurements) with states of length horizon + 1
        (including the initial state) and measurements of length horizon.
        Trajectories leaving the state bounds are rejected and resimulated,
        keeping the motion inside the surveilled region.
        """
        states = np.empty((horizon + 1, self.state_dim))
        measurements = np.empty((horizon, self.obs_dim))
        for _ in range(self._MAX_REJECTION_TRIES):
            states[0] = self.truth_init
            ok = True
            for t in range(1, horizon + 1):
                states[t] = self.truth_dynamic.propagate(states[t - 1], rng, True)
                if not self._in_bounds(states[t]):
                    ok = False
                    break
            if ok:
                break
        else:
            raise RuntimeError("could not simulate an in-bounds truth trajectory")
        for t in range(1, horizon + 1):
            measurements[t - 1] = self.measurement.measure(states[t], rng, True)
        return states, measurements
