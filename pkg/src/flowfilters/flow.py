"""Pseudo-time particle flow.

A flow migrates particles from the predictive distribution toward the
posterior by Euler-integrating an affine ODE d(eta)/d(lambda) =
A(lambda) eta + b(lambda) over lambda in (0, 1].  The EDH variant shares
one (A, b) pair per lambda step, linearized at a single mean trajectory;
the LEDH variant computes them per particle at each particle's own
auxiliary (noiseless) trajectory.  Every applied affine map is recorded,
which makes the composed transport exactly invertible and its Jacobian
determinant a running product of det(I + eps_j A_j).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import InvalidSchedule, NotPositiveDefinite, SingularFlowStep
from .models import MeasurementModel

__all__ = [
    "LambdaSchedule",
    "FlowParams",
    "FlowRecord",
    "FlowResult",
    "make_schedule",
    "edh_params",
    "ledh_params",
    "migrate",
    "accumulate_logdet",
    "invert_flow",
    "run_flow",
]

#: |det(I + eps*A)| below this is treated as a singular step
_DET_FLOOR = 1e-300


@dataclass(frozen=True)
class LambdaSchedule:
    """Step sizes eps_j > 0 summing to one and their running sums lambda_j."""

    epsilons: np.ndarray
    lambdas: np.ndarray

    def __len__(self) -> int:
        return self.epsilons.size

    def __iter__(self):
        return zip(self.lambdas, self.epsilons)


@dataclass(frozen=True)
class FlowParams:
    """One affine drift: f(eta) = A eta + b."""

    A: np.ndarray
    b: np.ndarray


@dataclass
class FlowRecord:
    """The affine maps applied to one trajectory, plus their log-Jacobian."""

    steps: List[Tuple[float, float, FlowParams]] = field(default_factory=list)
    log_abs_det: float = 0.0


@dataclass
class FlowResult:
    """Migrated particles and bookkeeping from one full flow."""

    eta1: np.ndarray
    aux1: np.ndarray
    log_dets: np.ndarray
    records: Optional[List[FlowRecord]]
    jitter_events: int = 0


def make_schedule(n_steps: int, ratio: float = 1.2) -> LambdaSchedule:
    """Geometric pseudo-time grid: eps_j proportional to ratio**j, sum 1.

    ratio=1 gives the uniform grid.
    """
    if n_steps < 1 or int(n_steps) != n_steps:
        raise InvalidSchedule(f"n_steps must be a positive integer, got {n_steps}")
    if not ratio >= 1.0:
        raise InvalidSchedule(f"ratio must be >= 1, got {ratio}")
    eps = np.power(float(ratio), np.arange(int(n_steps), dtype=float))
    eps /= eps.sum()
    return LambdaSchedule(epsilons=eps, lambdas=np.cumsum(eps))


def _params_batch(lam: float, lin_points: np.ndarray, eta0_mean: np.ndarray,
                  P: np.ndarray, z: np.ndarray, mm: MeasurementModel
                  ) -> Tuple[np.ndarray, np.ndarray, int]:
    """A and b for a batch of linearization points.

    Solves (lam H P H^T + R) by Cholesky with a shared jitter ladder;
    explicit inverses are never formed.  Returns (A, b, jitter_events)
    with A of shape (n, d, d) and b of shape (n, d).
    """
    n, d = lin_points.shape
    H = mm.jacobian_batch(lin_points)                       # (n, m, d)
    h_vals = mm.measure_batch(lin_points)                   # (n, m)
    R = mm.noise_cov_batch(lin_points)                      # (n, m, m)
    m = H.shape[1]

    e = h_vals - np.einsum("nmd,nd->nm", H, lin_points)
    PHt = np.einsum("ab,nmb->nam", P, H)                    # (n, d, m)
    S = lam * np.einsum("nma,nak->nmk", H, PHt) + R
    S = 0.5 * (S + np.swapaxes(S, 1, 2))

    jitter_events = 0
    eye_m = np.eye(m)
    base = 1e-9 * max(float(np.trace(S.mean(axis=0))) / m, 1e-30)
    for jitter in [0.0] + [base * 10.0 ** k for k in range(9)]:
        Sj = S + jitter * eye_m
        try:
            np.linalg.cholesky(Sj)
            break
        except np.linalg.LinAlgError:
            continue
    else:
        raise NotPositiveDefinite("flow innovation covariance is not factorizable")
    if jitter > 0.0:
        jitter_events = 1

    A = -0.5 * np.einsum("nam,nmd->nad", PHt, np.linalg.solve(Sj, H))
    innov = z - e                                           # (n, m)
    r_innov = np.linalg.solve(R, innov[..., None])[..., 0]
    drive = np.einsum("nam,nm->na", PHt, r_innov)
    eye_d = np.eye(d)
    term1 = np.einsum("nab,nb->na", eye_d + lam * A, drive)
    term2 = np.einsum("nab,b->na", A, eta0_mean)
    b = np.einsum("nab,nb->na", eye_d + 2.0 * lam * A, term1 + term2)
    return A, b, jitter_events


def edh_params(lam: float, lin_point: np.ndarray, eta0_mean: np.ndarray,
               P: np.ndarray, z: np.ndarray, mm: MeasurementModel) -> FlowParams:
    """Shared flow parameters linearized at lin_point.

    A(lam) = -1/2 P H^T (lam H P H^T + R)^-1 H and
    b(lam) = (I + 2 lam A) [(I + lam A) P H^T R^-1 (z - e) + A eta0_mean],
    with e = h(lin_point, 0) - H lin_point.
    """
    lin = np.asarray(lin_point, dtype=float)
    A, b, _ = _params_batch(float(lam), lin[None, :], np.asarray(eta0_mean, dtype=float),
                            np.asarray(P, dtype=float), np.asarray(z, dtype=float), mm)
    return FlowParams(A=A[0], b=b[0])


def ledh_params(lam: float, particle: np.ndarray, eta0_mean: np.ndarray,
                P: np.ndarray, z: np.ndarray, mm: MeasurementModel) -> FlowParams:
    """Per-particle flow parameters: the same equations linearized at the
    particle's own auxiliary trajectory point."""
    return edh_params(lam, particle, eta0_mean, P, z, mm)


def migrate(eta: np.ndarray, fp: FlowParams, eps: float) -> np.ndarray:
    """One Euler step of the affine flow ODE: eta + eps (A eta + b)."""
    return eta + eps * (fp.A @ eta + fp.b)


def accumulate_logdet(acc: float, fp: FlowParams, eps: float) -> float:
    """acc + log|det(I + eps A)|; raises when the step is singular."""
    sign, logabs = np.linalg.slogdet(np.eye(fp.A.shape[0]) + eps * fp.A)
    if sign == 0.0 or logabs < math.log(_DET_FLOOR):
        raise SingularFlowStep(f"|det(I + eps A)| underflowed at eps={eps}")
    return acc + float(logabs)


def invert_flow(eta1: np.ndarray, record: FlowRecord) -> np.ndarray:
    """Undo a recorded flow: apply (I + eps A)^-1 (eta - eps b) in reverse order."""
    eta = np.asarray(eta1, dtype=float)
    d = eta.size
    eye = np.eye(d)
    for _, eps, fp in reversed(record.steps):
        try:
            eta = np.linalg.solve(eye + eps * fp.A, eta - eps * fp.b)
        except np.linalg.LinAlgError as exc:
            raise SingularFlowStep("recorded flow step is singular") from exc
    return eta


def _batched_logdet_update(log_dets: np.ndarray, A: np.ndarray, eps: float) -> None:
    sign, logabs = np.linalg.slogdet(np.eye(A.shape[-1]) + eps * A)
    if np.any(sign == 0.0) or np.any(logabs < math.log(_DET_FLOOR)):
        raise SingularFlowStep(f"|det(I + eps A)| underflowed at eps={eps}")
    log_dets += logabs


def run_flow(eta0: np.ndarray, aux0: np.ndarray, eta0_mean: np.ndarray,
             P: np.ndarray, z: np.ndarray, mm: MeasurementModel,
             schedule: LambdaSchedule, kind: str,
             keep_records: bool = False) -> FlowResult:
    """Flow a particle cloud over the whole schedule.

    kind "edh" expects aux0 to be the single linearization trajectory
    start (a vector); "ledh" expects one auxiliary point per particle,
    shape (n, d).  kind "none" is the identity transport (used to reduce
    flow-based filters to their plain counterparts in tests).  The same
    recorded maps are applied to the auxiliary and the sampled particles,
    so the accumulated log-determinants are exact for the applied
    transport.
    """
    eta1 = np.array(eta0, dtype=float)
    n, d = eta1.shape
    log_dets = np.zeros(n)
    records: Optional[List[FlowRecord]] = None

    if kind == "none":
        if keep_records:
            records = [FlowRecord() for _ in range(n)]
        return FlowResult(eta1=eta1, aux1=np.array(aux0, dtype=float),
                          log_dets=log_dets, records=records)

    jitter_events = 0
    if kind == "edh":
        traj = np.array(aux0, dtype=float)
        if traj.ndim != 1:
            raise ValueError("edh flow expects a single trajectory vector")
        record = FlowRecord() if keep_records else None
        for lam, eps in schedule:
            A, b, jev = _params_batch(lam, traj[None, :], eta0_mean, P, z, mm)
            A0, b0 = A[0], b[0]
            jitter_events += jev
            if record is not None:
                record.steps.append((float(lam), float(eps), FlowParams(A0, b0)))
            traj = traj + eps * (A0 @ traj + b0)
            eta1 += eps * (eta1 @ A0.T + b0)
            _batched_logdet_update(log_dets, A0, eps)
            if record is not None:
                record.log_abs_det = float(log_dets[0])
        if keep_records:
            records = [record]
        return FlowResult(eta1=eta1, aux1=traj, log_dets=log_dets,
                          records=records, jitter_events=jitter_events)

    if kind == "ledh":
        aux = np.array(aux0, dtype=float)
        if aux.shape != eta1.shape:
            raise ValueError("ledh flow expects one auxiliary point per particle")
        if keep_records:
            records = [FlowRecord() for _ in range(n)]
        for lam, eps in schedule:
            A, b, jev = _params_batch(lam, aux, eta0_mean, P, z, mm)
            jitter_events += jev
            if records is not None:
                for i in range(n):
                    records[i].steps.append((float(lam), float(eps),
                                             FlowParams(A[i], b[i])))
            aux = aux + eps * (np.einsum("nab,nb->na", A, aux) + b)
            eta1 += eps * (np.einsum("nab,nb->na", A, eta1) + b)
            _batched_logdet_update(log_dets, A, eps)
            if records is not None:
                for i in range(n):
                    records[i].log_abs_det = float(log_dets[i])
        return FlowResult(eta1=eta1, aux1=aux, log_dets=log_dets,
                          records=records, jitter_events=jitter_events)

    raise ValueError(f"unknown flow kind {kind!r}")
