"""Filter drivers: GPF, PFGPF, PFPF and pure-flow EDH/LEDH.

Every driver is a pure step function (FilterState, measurement) ->
(FilterState, StepOutput).  A FilterState carries whichever posterior
representation the filter propagates (a Gaussian belief, a weighted
particle set, or both) plus the EKF/UKF covariance track the flow
equations read their predicted covariance from.

All weight arithmetic happens in log space; degenerate weights (every
particle at -inf) fall back to uniform and are flagged in the step
diagnostics instead of aborting a campaign.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import AllWeightsDegenerate, MissingCapability
from .flow import LambdaSchedule, run_flow
from .kalman import UkfParams, ekf_predict, ekf_update, ukf_predict, ukf_update
from .models import (GaussianBelief, ParticleSet, ScenarioModel,
                     normalize_log_weights)
from .numerics import cholesky_with_jitter, mvn_logpdf_batch, weighted_mean_cov

__all__ = [
    "FILTER_IDS",
    "FilterState",
    "StepOutput",
    "init_state",
    "step",
    "gpf_step",
    "pfgpf_step",
    "pfpf_step",
    "flow_filter_step",
    "ess",
    "systematic_resample",
]

FILTER_IDS = ("edh", "ledh", "pfpf_edh", "pfpf_ledh", "gpf", "pfgpf_edh", "pfgpf_ledh")


@dataclass
class FilterState:
    """Whatever the active filter carries between steps."""

    rng: np.random.Generator
    belief: Optional[GaussianBelief] = None
    particles: Optional[ParticleSet] = None
    kalman_belief: Optional[GaussianBelief] = None


@dataclass
class StepOutput:
    """Estimate plus posterior representation(s) and step diagnostics."""

    estimate: np.ndarray
    posterior: Optional[GaussianBelief] = None
    weighted_particles: Optional[ParticleSet] = None
    diagnostics: Dict = field(default_factory=dict)


def ess(weights) -> float:
    """Effective sample size 1 / sum(w_i^2) of normalized weights."""
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(w ** 2))


def systematic_resample(ps: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    """Single-offset stratified inversion of the weight CDF; uniform output."""
    w = ps.normalized_weights()
    n = ps.n
    positions = (rng.random() + np.arange(n)) / n
    idx = np.searchsorted(np.cumsum(w), positions, side="right")
    return ParticleSet(ps.states[np.minimum(idx, n - 1)].copy())


def _sample_gaussian(b: GaussianBelief, n: int, rng: np.random.Generator
                     ) -> Tuple[np.ndarray, int]:
    L, jitter = cholesky_with_jitter(b.cov)
    draws = b.mean + rng.standard_normal((n, b.dim)) @ L.T
    return draws, int(jitter > 0.0)


def _propagate(dm, xs: np.ndarray, rng: Optional[np.random.Generator],
               with_noise: bool) -> np.ndarray:
    return np.stack([dm.propagate(x, rng, with_noise) for x in xs])


def _weights_or_uniform(log_w: np.ndarray) -> Tuple[np.ndarray, bool]:
    try:
        return normalize_log_weights(log_w), False
    except AllWeightsDegenerate:
        return np.full(len(log_w), 1.0 / len(log_w)), True


def _log_weight_var(log_w: np.ndarray) -> float:
    finite = log_w[np.isfinite(log_w)]
    return float(np.var(finite)) if finite.size else float("inf")


def _predict(kb: GaussianBelief, dm, kalman: str, ukf_params: Optional[UkfParams]):
    if kalman == "ukf":
        return ukf_predict(kb, dm, ukf_params or UkfParams())
    return ekf_predict(kb, dm)


def _update(kb: GaussianBelief, z, mm, kalman: str, ukf_params: Optional[UkfParams]):
    if kalman == "ukf":
        return ukf_update(kb, z, mm, ukf_params or UkfParams())
    return ekf_update(kb, z, mm)


def _flow_inputs(flow_kind: str, aux0: np.ndarray, kb_pred: GaussianBelief):
    """Trajectory start and the static eta0_mean for the b-equation."""
    if flow_kind == "ledh":
        return aux0, aux0.mean(axis=0)
    if flow_kind in ("edh", "none"):
        return kb_pred.mean, kb_pred.mean
    raise ValueError(f"unknown flow kind {flow_kind!r}")


def gpf_step(fs: FilterState, z: np.ndarray, sm: ScenarioModel, n_p: int
             ) -> Tuple[FilterState, StepOutput]:
    """Gaussian particle filter step with the predictive-Gaussian proposal.

    Particles drawn from the previous posterior Gaussian are propagated
    with noise; with the predictive Gaussian as proposal the importance
    weight reduces to the likelihood, and a single Gaussian is refit to
    the weighted cloud.
    """
    t0 = time.perf_counter()
    rng = fs.rng
    mm = sm.measurement
    x_prev, jitter = _sample_gaussian(fs.belief, n_p, rng)
    eta = _propagate(sm.dynamic, x_prev, rng, True)
    log_w = np.array([mm.log_likelihood(z, x) for x in eta])
    w, degenerate = _weights_or_uniform(log_w)
    post = weighted_mean_cov(ParticleSet(eta, None if degenerate else log_w))
    new_fs = FilterState(rng=rng, belief=post, kalman_belief=fs.kalman_belief)
    out = StepOutput(
        estimate=post.mean, posterior=post,
        weighted_particles=ParticleSet(eta, None if degenerate else log_w),
        diagnostics={"ess": ess(w), "log_weight_var": _log_weight_var(log_w),
                     "degenerate": degenerate, "jitter_events": jitter,
                     "seconds": time.perf_counter() - t0})
    return new_fs, out


def pfgpf_step(fs: FilterState, z: np.ndarray, sm: ScenarioModel, n_p: int,
               flow_kind: str, schedule: LambdaSchedule, *,
               kalman: str = "ekf", ukf_params: Optional[UkfParams] = None,
               flow_cov: str = "kalman", keep_flow_records: bool = False
               ) -> Tuple[FilterState, StepOutput]:
    """One step of the particle flow Gaussian particle filter.

    Particles redrawn from the previous posterior Gaussian are propagated
    twice (with noise, and noiselessly for the auxiliary linearization
    trajectories), migrated by the recorded invertible flow, and
    reweighted with the flow Jacobian factor before a Gaussian is refit:

        log w_i = [log N(eta1_i; pred) - log N(eta0_i; pred)]
                  + log|det T_i| + log p(z | eta1_i)

    The EKF/UKF track supplies the predicted covariance the flow
    parameters use (flow_cov="ensemble" switches to the ensemble
    predictive covariance).
    """
    t0 = time.perf_counter()
    rng = fs.rng
    dm, mm = sm.dynamic, sm.measurement
    x_prev, jitter = _sample_gaussian(fs.belief, n_p, rng)
    eta0 = _propagate(dm, x_prev, rng, True)
    aux0 = _propagate(dm, x_prev, None, False)
    pred = weighted_mean_cov(ParticleSet(eta0))

    kb_pred = _predict(fs.kalman_belief, dm, kalman, ukf_params)
    P = pred.cov if flow_cov == "ensemble" else kb_pred.cov
    aux_start, eta0_mean = _flow_inputs(flow_kind, aux0, kb_pred)
    fr = run_flow(eta0, aux_start, eta0_mean, P, z, mm, schedule, flow_kind,
                  keep_records=keep_flow_records)

    log_gauss = mvn_logpdf_batch(np.concatenate([fr.eta1, eta0]), pred.mean, pred.cov)
    log_lik = np.array([mm.log_likelihood(z, x) for x in fr.eta1])
    log_w = (log_gauss[:n_p] - log_gauss[n_p:]) + fr.log_dets + log_lik
    w, degenerate = _weights_or_uniform(log_w)
    weighted = ParticleSet(fr.eta1, None if degenerate else log_w)
    post = weighted_mean_cov(weighted)

    kb_post = _update(kb_pred, z, mm, kalman, ukf_params)
    new_fs = FilterState(rng=rng, belief=post,
                         kalman_belief=GaussianBelief(post.mean, kb_post.cov))
    diagnostics = {"ess": ess(w), "log_weight_var": _log_weight_var(log_w),
                   "degenerate": degenerate,
                   "jitter_events": jitter + fr.jitter_events,
                   "seconds": time.perf_counter() - t0}
    if keep_flow_records:
        diagnostics["flow_records"] = fr.records
        diagnostics["eta0"] = eta0
    return new_fs, StepOutput(estimate=post.mean, posterior=post,
                              weighted_particles=weighted, diagnostics=diagnostics)


def pfpf_step(fs: FilterState, z: np.ndarray, sm: ScenarioModel, n_p: int,
              flow_kind: str, schedule: LambdaSchedule, *,
              kalman: str = "ekf", ukf_params: Optional[UkfParams] = None,
              flow_cov: str = "kalman", keep_flow_records: bool = False
              ) -> Tuple[FilterState, StepOutput]:
    """Particle flow particle filter step (flow as proposal, PF weights).

    Requires the dynamic model to evaluate its transition density.  The
    weight update multiplies the previous weight by the transition ratio
    p(eta1 | x_prev) / p(eta0 | x_prev), the flow Jacobian factor and the
    likelihood; systematic resampling triggers when ESS < n_p / 2.
    """
    t0 = time.perf_counter()
    dm, mm = sm.dynamic, sm.measurement
    if not dm.has_transition_density:
        raise MissingCapability("pfpf requires a transition density; scenario lacks one")
    rng = fs.rng
    ps = fs.particles
    x_prev = ps.states
    prev_log_w = (np.zeros(ps.n) if ps.log_weights is None
                  else np.log(ps.normalized_weights()))
    eta0 = _propagate(dm, x_prev, rng, True)
    aux0 = _propagate(dm, x_prev, None, False)

    kb_pred = _predict(fs.kalman_belief, dm, kalman, ukf_params)
    if flow_cov == "ensemble":
        P = weighted_mean_cov(ParticleSet(eta0, ps.log_weights)).cov
    else:
        P = kb_pred.cov
    aux_start, eta0_mean = _flow_inputs(flow_kind, aux0, kb_pred)
    fr = run_flow(eta0, aux_start, eta0_mean, P, z, mm, schedule, flow_kind,
                  keep_records=keep_flow_records)

    trans_ratio = np.array([
        dm.log_transition_density(fr.eta1[i], x_prev[i])
        - dm.log_transition_density(eta0[i], x_prev[i]) for i in range(ps.n)])
    log_lik = np.array([mm.log_likelihood(z, x) for x in fr.eta1])
    log_w = prev_log_w + trans_ratio + fr.log_dets + log_lik
    w, degenerate = _weights_or_uniform(log_w)
    estimate = w @ fr.eta1

    sample_size = ess(w)
    resampled = sample_size < ps.n / 2.0
    if resampled:
        new_ps = systematic_resample(
            ParticleSet(fr.eta1, None if degenerate else log_w), rng)
    else:
        new_ps = ParticleSet(fr.eta1, None if degenerate else log_w)

    kb_post = _update(kb_pred, z, mm, kalman, ukf_params)
    new_fs = FilterState(rng=rng, particles=new_ps,
                         kalman_belief=GaussianBelief(estimate, kb_post.cov))
    diagnostics = {"ess": sample_size, "log_weight_var": _log_weight_var(log_w),
                   "degenerate": degenerate, "resampled": resampled,
                   "jitter_events": fr.jitter_events,
                   "seconds": time.perf_counter() - t0}
    if keep_flow_records:
        diagnostics["flow_records"] = fr.records
        diagnostics["eta0"] = eta0
    return new_fs, StepOutput(
        estimate=estimate,
        weighted_particles=ParticleSet(fr.eta1, None if degenerate else log_w),
        diagnostics=diagnostics)


def flow_filter_step(fs: FilterState, z: np.ndarray, sm: ScenarioModel, n_p: int,
                     flow_kind: str, schedule: LambdaSchedule, *,
                     kalman: str = "ekf", ukf_params: Optional[UkfParams] = None,
                     flow_cov: str = "kalman", keep_flow_records: bool = False
                     ) -> Tuple[FilterState, StepOutput]:
    """Pure particle flow filter step (no importance weighting).

    Particles are propagated and migrated; the estimate is their plain
    mean and the EKF/UKF track is refreshed for the next step.
    """
    t0 = time.perf_counter()
    dm, mm = sm.dynamic, sm.measurement
    rng = fs.rng
    x_prev = fs.particles.states
    eta0 = _propagate(dm, x_prev, rng, True)
    aux0 = _propagate(dm, x_prev, None, False)

    kb_pred = _predict(fs.kalman_belief, dm, kalman, ukf_params)
    if flow_cov == "ensemble":
        P = weighted_mean_cov(ParticleSet(eta0)).cov
    else:
        P = kb_pred.cov
    aux_start, eta0_mean = _flow_inputs(flow_kind, aux0, kb_pred)
    fr = run_flow(eta0, aux_start, eta0_mean, P, z, mm, schedule, flow_kind,
                  keep_records=keep_flow_records)

    estimate = fr.eta1.mean(axis=0)
    kb_post = _update(kb_pred, z, mm, kalman, ukf_params)
    new_fs = FilterState(rng=rng, particles=ParticleSet(fr.eta1),
                         kalman_belief=GaussianBelief(estimate, kb_post.cov))
    diagnostics = {"ess": float(n_p), "log_weight_var": 0.0, "degenerate": False,
                   "jitter_events": fr.jitter_events,
                   "seconds": time.perf_counter() - t0}
    if keep_flow_records:
        diagnostics["flow_records"] = fr.records
        diagnostics["eta0"] = eta0
    return new_fs, StepOutput(estimate=estimate,
                              weighted_particles=ParticleSet(fr.eta1),
                              diagnostics=diagnostics)


def init_state(filter_id: str, prior: GaussianBelief, n_p: int,
               rng: np.random.Generator) -> FilterState:
    """Initial FilterState for a filter id, drawing prior particles if needed."""
    if filter_id not in FILTER_IDS:
        raise ValueError(f"unknown filter {filter_id!r}")
    kb = GaussianBelief(prior.mean.copy(), prior.cov.copy())
    if filter_id in ("gpf", "pfgpf_edh", "pfgpf_ledh"):
        return FilterState(rng=rng, belief=prior, kalman_belief=kb)
    draws, _ = _sample_gaussian(prior, n_p, rng)
    return FilterState(rng=rng, particles=ParticleSet(draws), kalman_belief=kb)


def step(filter_id: str, fs: FilterState, z: np.ndarray, sm: ScenarioModel,
         n_p: int, schedule: LambdaSchedule, *, kalman: str = "ekf",
         ukf_params: Optional[UkfParams] = None, flow_cov: str = "kalman",
         keep_flow_records: bool = False) -> Tuple[FilterState, StepOutput]:
    """Dispatch one filter step by id."""
    opts = dict(kalman=kalman, ukf_params=ukf_params, flow_cov=flow_cov,
                keep_flow_records=keep_flow_records)
    if filter_id == "gpf":
        return gpf_step(fs, z, sm, n_p)
    if filter_id in ("pfgpf_edh", "pfgpf_ledh"):
        return pfgpf_step(fs, z, sm, n_p, filter_id.removeprefix("pfgpf_"), schedule, **opts)
    if filter_id in ("pfpf_edh", "pfpf_ledh"):
        return pfpf_step(fs, z, sm, n_p, filter_id.removeprefix("pfpf_"), schedule, **opts)
    if filter_id in ("edh", "ledh"):
        return flow_filter_step(fs, z, sm, n_p, filter_id, schedule, **opts)
    raise ValueError(f"unknown filter {filter_id!r}")
