"""Error metrics for the benchmark campaigns."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .errors import CardinalityMismatch, ShapeMismatch

__all__ = ["omat", "mse", "extract_target_positions"]


def omat(a: np.ndarray, b: np.ndarray, p: float = 1.0) -> float:
    """Optimal mass transfer distance between equal-cardinality point sets.

    (1/C) * (min over permutations of sum of pairwise Euclidean distances
    raised to p) ** (1/p), with the optimal assignment found by the
    Hungarian algorithm.  Note the 1/C factor sits outside the root.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[0] != b.shape[0]:
        raise CardinalityMismatch(f"point sets have sizes {a.shape[0]} and {b.shape[0]}")
    if p < 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    cost = cdist(a, b) ** p
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum() ** (1.0 / p)) / a.shape[0]


def mse(truth, estimate) -> float:
    """Squared error averaged over both time steps and state dimensions."""
    truth = np.asarray(truth, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if truth.shape != estimate.shape:
        raise ShapeMismatch(f"truth shape {truth.shape} != estimate shape {estimate.shape}")
    return float(np.mean((truth - estimate) ** 2))


def extract_target_positions(x: np.ndarray) -> np.ndarray:
    """Positions (x, y) of each target from a stacked [x, y, vx, vy] state."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size % 4 != 0:
        raise ShapeMismatch(f"state length {x.shape} is not a multiple of 4")
    return x.reshape(-1, 4)[:, :2].copy()
